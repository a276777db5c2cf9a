//! Contrastive pretraining loop.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelDims, ModelGrad, ToyModel};
use super::synthetic::ToyData;
use crate::contrastive::{gradients, loss_multimodal, LossKind, Modality, ProjectionSet};
use crate::error::{Error, Result};
use crate::hamming_index::HammingIndex;
use crate::negsampler::{domain, epoch_iterator, ManiNegParams, SamplerRng, SamplingStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Maninegs,
    Uniform,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Maninegs => "maninegs",
            SamplerKind::Uniform => "uniform",
        }
    }

    pub fn strategy(self, params: ManiNegParams) -> SamplingStrategy {
        match self {
            SamplerKind::Maninegs => SamplingStrategy::Maninegs(params),
            SamplerKind::Uniform => SamplingStrategy::Uniform { dedup: false },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "uni")]
    Unimodal,
    #[serde(rename = "multi")]
    Multimodal,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Unimodal => "uni",
            Scenario::Multimodal => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub warmup_steps: u64,
    pub lr_peak: f64,
    pub lr_min: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub manif_dropout_p: f64,
    pub tau_init: f64,
    /// `feature_dim` and `n_bits` are taken from the data.
    pub dims: ModelDims,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            warmup_steps: 100,
            lr_peak: 0.1,
            lr_min: 1e-4,
            batch_size: 64,
            weight_decay: 1e-4,
            manif_dropout_p: 0.5,
            tau_init: 0.7,
            dims: ModelDims::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(0.0 <= self.lr_min && self.lr_min <= self.lr_peak) {
            return bad("need 0 ≤ lr_min ≤ lr_peak");
        }
        if self.steps <= self.warmup_steps {
            return bad("steps must exceed warmup_steps");
        }
        if !(0.0..1.0).contains(&self.manif_dropout_p) {
            return bad("dropout probability must be in [0, 1)");
        }
        if self.batch_size < 2 {
            return bad("batch size must be ≥ 2");
        }
        if self.tau_init.is_nan() || self.tau_init <= 0.0 {
            return bad("temperature must be positive");
        }
        Ok(())
    }

    /// Linear warmup to `lr_peak`, then cosine decay to `lr_min`.
    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.lr_peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let t = (step - self.warmup_steps) as f64 / (self.steps - self.warmup_steps) as f64;
        self.lr_min + 0.5 * (self.lr_peak - self.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
    }

    /// Model shape for `data`.
    pub fn model_dims(&self, data: &ToyData) -> ModelDims {
        ModelDims {
            feature_dim: data.cc.ncols(),
            n_bits: data.dataset.schema().len(),
            ..self.dims
        }
    }

    pub fn init_model(&self, data: &ToyData) -> ToyModel {
        ToyModel::init(self.model_dims(data), self.tau_init, self.seed)
    }
}

/// One logged step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLogEntry {
    pub step: u64,
    pub l_uni: f64,
    #[serde(rename = "l_M", skip_serializing_if = "Option::is_none")]
    pub l_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_multi: Option<f64>,
    pub tau: f64,
    pub batch_len: usize,
}

impl LossLogEntry {
    /// The optimised objective.
    pub fn objective(&self) -> f64 {
        self.l_multi.unwrap_or(self.l_uni)
    }
}

/// Cached forward pass over one batch.
struct Forward {
    set: ProjectionSet,
    cache_i: super::model::MlpCache,
    cache_m: Option<(super::model::MlpCache, Array2<f64>)>,
    cache_g: super::model::MlpCache,
    n_img: usize,
}

fn forward(model: &ToyModel, data: &ToyData, rows: &[usize], dropout: Option<Array2<f64>>, multi: bool) -> Result<Forward> {
    let b = rows.len();
    let x = concatenate(
        Axis(0),
        &[data.cc.select(Axis(0), rows).view(), data.mlo.select(Axis(0), rows).view()],
    )
    .expect("views share a width");
    let (y_img, cache_i) = model.f_i.forward(&x);
    let (y_all, cache_m) = if multi {
        let (y_m, cache) = model.f_m.forward(&data.manifestation_matrix(rows));
        let mask = dropout.unwrap_or_else(|| Array2::ones(y_m.raw_dim()));
        let y_md = &y_m * &mask;
        (
            concatenate(Axis(0), &[y_img.view(), y_md.view()]).expect("same repr dim"),
            Some((cache, mask)),
        )
    } else {
        (y_img, None)
    };
    let (z, cache_g) = model.g.forward(&y_all);
    let mut modality = vec![Modality::ImageCc; b];
    modality.extend(std::iter::repeat_n(Modality::ImageMlo, b));
    let mut instance: Vec<u64> = rows.iter().map(|&r| r as u64).collect();
    instance.extend_from_within(..);
    if multi {
        modality.extend(std::iter::repeat_n(Modality::Manifestation, b));
        instance.extend_from_within(..b);
    }
    let dim = z.ncols();
    let set = ProjectionSet::from_parts(dim, z.into_raw_vec_and_offset().0, modality, instance)?;
    Ok(Forward {
        set,
        cache_i,
        cache_m,
        cache_g,
        n_img: 2 * b,
    })
}

/// One gradient step on the batch `rows`; returns the log entry.
fn train_step(
    model: &mut ToyModel,
    data: &ToyData,
    rows: &[usize],
    scenario: Scenario,
    cfg: &TrainConfig,
    step: u64,
) -> Result<LossLogEntry> {
    let multi = scenario == Scenario::Multimodal;
    let dropout = if multi && cfg.manif_dropout_p > 0.0 {
        let mut rng = SamplerRng::new(cfg.seed).stream(domain::DROPOUT, 0, step);
        let keep = 1.0 - cfg.manif_dropout_p;
        let shape = (rows.len(), model.f_m.outputs());
        Some(Array2::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        }))
    } else {
        None
    };
    let fw = forward(model, data, rows, dropout, multi)?;
    let tau = model.temperature.tau();
    let kind = if multi { LossKind::Multimodal } else { LossKind::Unimodal };
    let grads = gradients(&fw.set, tau, kind)?;
    if !grads.loss.is_finite() || grads.d_vectors.iter().any(|g| !g.is_finite()) {
        return Err(Error::DivergedLoss(step as usize));
    }
    let entry = if multi {
        let parts = loss_multimodal(&fw.set, tau)?;
        LossLogEntry {
            step,
            l_uni: parts.l_uni,
            l_m: Some(parts.l_m),
            l_multi: Some(parts.l_multi),
            tau,
            batch_len: rows.len(),
        }
    } else {
        LossLogEntry {
            step,
            l_uni: grads.loss,
            l_m: None,
            l_multi: None,
            tau,
            batch_len: rows.len(),
        }
    };

    let dz = Array2::from_shape_vec((fw.set.len(), fw.set.dim()), grads.d_vectors)
        .expect("gradient layout matches the batch");
    let (g_grad, dy) = model.g.backward(&fw.cache_g, &dz);
    let (i_grad, _) = model.f_i.backward(&fw.cache_i, &dy.slice(s![..fw.n_img, ..]).to_owned());
    let m_grad = fw.cache_m.as_ref().map(|(cache, mask)| {
        let dy_m = &dy.slice(s![fw.n_img.., ..]) * mask;
        model.f_m.backward(cache, &dy_m).0
    });
    let grad = ModelGrad {
        f_i: Some(i_grad),
        f_m: m_grad,
        g: g_grad,
        d_log_tau: grads.d_log_tau,
    };
    model.sgd_step(&grad, cfg.lr(step), cfg.weight_decay);
    Ok(entry)
}

/// Pretrains `model` on the instances `train_rows` of `data`.
pub fn pretrain(
    model: &mut ToyModel,
    data: &ToyData,
    train_rows: &[usize],
    strategy: &SamplingStrategy,
    scenario: Scenario,
    cfg: &TrainConfig,
) -> Result<Vec<LossLogEntry>> {
    pretrain_observed(model, data, train_rows, strategy, scenario, cfg, 0, |_, _| Ok(()))
}

/// [`pretrain`] that calls `observe(step, model)` before the first step,
/// every `every` steps and after the last one (`every = 0` disables it).
#[allow(clippy::too_many_arguments)]
pub fn pretrain_observed(
    model: &mut ToyModel,
    data: &ToyData,
    train_rows: &[usize],
    strategy: &SamplingStrategy,
    scenario: Scenario,
    cfg: &TrainConfig,
    every: u64,
    mut observe: impl FnMut(u64, &ToyModel) -> Result<()>,
) -> Result<Vec<LossLogEntry>> {
    cfg.validate()?;
    if model.dims() != cfg.model_dims(data) {
        return Err(Error::InvalidParameter("model shape does not match the data".into()));
    }
    let ds = data.dataset.subset(train_rows);
    let idx = match strategy {
        SamplingStrategy::Maninegs(_) => Some(HammingIndex::build(&ds)?),
        SamplingStrategy::Uniform { .. } => None,
    };
    let batches = epoch_iterator(idx.as_ref(), &ds, *strategy, cfg.batch_size, SamplerRng::new(cfg.seed))?;
    let mut log = Vec::with_capacity(cfg.steps as usize);
    if every > 0 {
        observe(0, model)?;
    }
    for sb in batches.take(cfg.steps as usize) {
        let sb = sb?;
        let rows: Vec<usize> = sb.batch.instances().iter().map(|&o| train_rows[o]).collect();
        log.push(train_step(model, data, &rows, scenario, cfg, sb.step)?);
        let done = sb.step + 1;
        if every > 0 && (done % every == 0 || done == cfg.steps) {
            observe(done, model)?;
        }
    }
    Ok(log)
}

/// Projections of both views and the manifestation of `rows`, no dropout.
pub fn project(model: &ToyModel, data: &ToyData, rows: &[usize]) -> Result<ProjectionSet> {
    Ok(forward(model, data, rows, None, true)?.set)
}
