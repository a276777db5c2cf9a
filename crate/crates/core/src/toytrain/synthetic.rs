//! Synthetic multimodal population with a known latent.
//!
//! Each instance has a lesion latent `h` and a nuisance latent `u`. The
//! manifestation and the label depend on `h` only. Both image views see
//! `h` and `u` through the same linear map, plus independent view noise.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Bits, Manifestation, ManifestDataset, ManifestationSchema};
use crate::negsampler::{domain, SamplerRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Flat schema, every bit an independent thresholded projection.
    Independent,
    /// Mammography schema: exclusive groups, mass and calcification
    /// families switched on and off together.
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_instances: usize,
    pub latent_dim: usize,
    /// Latent factors visible in images but absent from manifestations.
    pub nuisance_dim: usize,
    pub n_manif_bits: usize,
    /// Per-bit flip probability; 0.5 destroys all information.
    pub trait_flip_noise: f64,
    pub feature_dim: usize,
    pub view_noise_sigma: f64,
    /// Amplitude of the noiseless traits drawn directly into each view.
    pub trait_visibility: f64,
    /// Label is `direction · h > label_threshold`.
    pub label_threshold: f64,
    pub correlation_mode: CorrelationMode,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_instances: 2764,
            latent_dim: 4,
            nuisance_dim: 8,
            n_manif_bits: 35,
            trait_flip_noise: 0.0,
            feature_dim: 32,
            view_noise_sigma: 0.05,
            trait_visibility: 1.0,
            label_threshold: 0.0,
            correlation_mode: CorrelationMode::Grouped,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_instances < 2 {
            return bad(format!("need at least 2 instances, got {}", self.n_instances));
        }
        if self.latent_dim == 0 || self.feature_dim == 0 || self.n_manif_bits == 0 {
            return bad("dimensions must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.trait_flip_noise) {
            return bad(format!("flip noise {} outside [0, 1]", self.trait_flip_noise));
        }
        if !(self.trait_visibility >= 0.0 && self.trait_visibility.is_finite()) {
            return bad(format!("trait visibility {} must be ≥ 0", self.trait_visibility));
        }
        if !(self.view_noise_sigma >= 0.0 && self.view_noise_sigma.is_finite()) {
            return bad(format!("view noise {} must be ≥ 0", self.view_noise_sigma));
        }
        let mammo = ManifestationSchema::mammography().len();
        if self.correlation_mode == CorrelationMode::Grouped && self.n_manif_bits != mammo {
            return bad(format!("grouped mode uses the {mammo}-bit schema"));
        }
        Ok(())
    }

    pub fn schema(&self) -> ManifestationSchema {
        match self.correlation_mode {
            CorrelationMode::Grouped => ManifestationSchema::mammography(),
            CorrelationMode::Independent => ManifestationSchema::flat(self.n_manif_bits),
        }
    }
}

/// The fixed maps from latent to observations, drawn once per data seed.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    schema: ManifestationSchema,
    /// Per-bit projection of `h`, `n_bits × latent_dim`.
    trait_w: Array2<f64>,
    trait_b: Array1<f64>,
    /// Family presence directions (mass, calcification) for grouped mode.
    presence: Array2<f64>,
    view_a: Array2<f64>,
    view_b: Array2<f64>,
    view_c: Array2<f64>,
    label_dir: Array1<f64>,
    label_threshold: f64,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

impl SyntheticWorld {
    pub fn new(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let schema = spec.schema();
        let l = spec.latent_dim;
        let trait_w = normal_matrix(rng, schema.len(), l, 2.0 / (l as f64).sqrt());
        let trait_b = match spec.correlation_mode {
            CorrelationMode::Independent => Array1::zeros(schema.len()),
            // misc signs are rare, so their thresholds sit above zero
            CorrelationMode::Grouped => Array1::from_iter((0..schema.len()).map(|bit| {
                if bit >= schema.offsets()[schema.groups().len() - 1] {
                    -1.0 - rng.random::<f64>()
                } else {
                    0.0
                }
            })),
        };
        let presence = normal_matrix(rng, 2, l, 2.0 / (l as f64).sqrt());
        let f = spec.feature_dim;
        let view_a = normal_matrix(rng, f, l, 1.0 / (l as f64).sqrt());
        let view_b = normal_matrix(rng, f, spec.nuisance_dim, 1.0 / (spec.nuisance_dim.max(1) as f64).sqrt());
        let view_c = normal_matrix(rng, f, schema.len(), spec.trait_visibility / (schema.len() as f64).sqrt());
        let mut label_dir = Array1::from_shape_simple_fn(l, || rng.sample::<f64, _>(StandardNormal));
        label_dir /= label_dir.dot(&label_dir).sqrt();
        Ok(Self {
            schema,
            trait_w,
            trait_b,
            presence,
            view_a,
            view_b,
            view_c,
            label_dir,
            label_threshold: spec.label_threshold,
        })
    }

    pub fn schema(&self) -> &ManifestationSchema {
        &self.schema
    }

    /// Noiseless manifestation of a latent.
    pub fn manifestation(&self, h: &[f64]) -> Bits {
        // p = 0 never touches the generator
        self.noisy_manifestation(h, 0.0, &mut <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))
    }

    /// With probability `min(1, 2p)` each exclusive group (or free bit) is
    /// redrawn uniformly over its outcomes, so a free bit flips with
    /// probability exactly `p`.
    pub fn noisy_manifestation<R: Rng + ?Sized>(&self, h: &[f64], p: f64, rng: &mut R) -> Bits {
        let h = ndarray::ArrayView1::from(h);
        let logits = self.trait_w.dot(&h) + &self.trait_b;
        let resample = (2.0 * p).min(1.0);
        let mut bits = Bits::zeros(self.schema.len());
        for (g, group) in self.schema.groups().iter().enumerate() {
            let off = self.schema.offsets()[g];
            let k = group.options.len();
            if group.exclusive {
                // a present family fills every one of its groups
                let family = if g < 4 { 0 } else { 1 };
                let present = self.presence.row(family).dot(&h) > 0.0;
                let mut choice = if present {
                    (0..k).max_by(|&x, &y| logits[off + x].total_cmp(&logits[off + y])).expect("k ≥ 1")
                } else {
                    k
                };
                // outcome k means the group is absent
                if resample > 0.0 && rng.random::<f64>() < resample {
                    choice = rng.random_range(0..=k);
                }
                if choice < k {
                    bits.set(off + choice, true);
                }
            } else {
                for o in 0..k {
                    let mut b = logits[off + o] > 0.0;
                    if resample > 0.0 && rng.random::<f64>() < resample {
                        b = rng.random::<bool>();
                    }
                    bits.set(off + o, b);
                }
            }
        }
        bits
    }

    /// Noiseless image view `A h + C m(h) + B u`, where `m(h)` is the
    /// noiseless manifestation: images show the true traits, annotations
    /// carry the flip noise.
    pub fn view(&self, h: &[f64], u: &[f64]) -> Array1<f64> {
        let m = Array1::from_iter(self.manifestation(h).to_bools().into_iter().map(f64::from));
        self.view_a.dot(&ndarray::ArrayView1::from(h))
            + self.view_c.dot(&m)
            + self.view_b.dot(&ndarray::ArrayView1::from(u))
    }

    pub fn label(&self, h: &[f64]) -> bool {
        self.label_dir.dot(&ndarray::ArrayView1::from(h)) > self.label_threshold
    }
}

/// Image view of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Cc,
    Mlo,
}

/// A generated population. Row `i` of every table is instance ordinal `i`.
#[derive(Debug, Clone)]
pub struct ToyData {
    pub dataset: ManifestDataset,
    pub cc: Array2<f64>,
    pub mlo: Array2<f64>,
    pub labels: Vec<bool>,
    pub latent: Array2<f64>,
    pub nuisance: Array2<f64>,
    pub world: SyntheticWorld,
}

impl ToyData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn view(&self, v: View) -> &Array2<f64> {
        match v {
            View::Cc => &self.cc,
            View::Mlo => &self.mlo,
        }
    }

    /// Manifestation bits of the given rows as a dense 0/1 matrix.
    pub fn manifestation_matrix(&self, rows: &[usize]) -> Array2<f64> {
        let recs = self.dataset.records();
        let n_bits = self.dataset.schema().len();
        Array2::from_shape_fn((rows.len(), n_bits), |(r, b)| {
            if recs[rows[r]].bits.get(b) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Draws a population. Everything is fixed by `seed`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<ToyData> {
    spec.validate()?;
    let streams = SamplerRng::new(seed);
    let world = SyntheticWorld::new(spec, &mut streams.stream(domain::DATA, 0, 0))?;
    let n = spec.n_instances;
    let latent = normal_matrix(&mut streams.stream(domain::DATA, 0, 1), n, spec.latent_dim, 1.0);
    let nuisance = normal_matrix(&mut streams.stream(domain::DATA, 0, 2), n, spec.nuisance_dim, 1.0);

    let mut flips = streams.stream(domain::DATA, 0, 3);
    let mut records = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (i, h) in latent.axis_iter(Axis(0)).enumerate() {
        let h = h.as_slice().expect("row-major");
        let bits = world.noisy_manifestation(h, spec.trait_flip_noise, &mut flips);
        records.push(Manifestation::new(i as u64, bits));
        labels.push(world.label(h));
    }

    let mut views = Vec::with_capacity(2);
    for stream in [4, 5] {
        let mut noise = streams.stream(domain::DATA, 0, stream);
        let mut x = Array2::zeros((n, spec.feature_dim));
        for i in 0..n {
            let h = latent.row(i);
            let u = nuisance.row(i);
            let clean = world.view(h.as_slice().unwrap(), u.as_slice().unwrap());
            for (j, c) in clean.iter().enumerate() {
                let e: f64 = noise.sample(StandardNormal);
                x[[i, j]] = c + spec.view_noise_sigma * e;
            }
        }
        views.push(x);
    }
    let mlo = views.pop().unwrap();
    let cc = views.pop().unwrap();

    let dataset = ManifestDataset::new(world.schema().clone(), records, Some(labels.clone()))?;
    Ok(ToyData {
        dataset,
        cc,
        mlo,
        labels,
        latent,
        nuisance,
        world,
    })
}

/// Instance ordinals of a train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded 7:1:2 partition of `0..n`.
    pub fn seven_one_two(n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut SamplerRng::new(seed).stream(domain::SPLIT, 0, 0));
        let n_train = n * 7 / 10;
        let n_val = n / 10;
        let test = order.split_off(n_train + n_val);
        let val = order.split_off(n_train);
        Self {
            train: order,
            val,
            test,
        }
    }
}
