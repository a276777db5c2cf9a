//! Distance distributions around sampled batches and the scarcity bound.

use rand::Rng;
use serde::Serialize;

use super::epoch::SamplingStrategy;
use super::rng::{domain, SamplerRng};
use super::sampler::{sample_batch_maninegs, sample_batch_uniform, Batch};
use crate::error::{Error, Result};
use crate::hamming_index::HammingIndex;
use crate::manifest::ManifestDataset;

/// Counts indexed by integer distance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DistanceHistogram {
    counts: Vec<u64>,
}

impl DistanceHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, d: u32) {
        let d = d as usize;
        if d >= self.counts.len() {
            self.counts.resize(d + 1, 0);
        }
        self.counts[d] += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, d: u32) -> u64 {
        self.counts.get(d as usize).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| {
            self.counts
                .iter()
                .enumerate()
                .map(|(d, &c)| d as f64 * c as f64)
                .sum::<f64>()
                / t as f64
        })
    }

    /// Empirical probabilities indexed by distance.
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// `(distance, count)` rows for `0..=max(d_max, largest observed)`.
    pub fn rows(&self, d_max: u32) -> Vec<(u32, u64)> {
        let end = (d_max as usize + 1).max(self.counts.len());
        (0..end).map(|d| (d as u32, self.count(d as u32))).collect()
    }
}

/// Anchor-to-member distances over all batches.
pub fn anchor_distance_histogram(batches: &[Batch]) -> DistanceHistogram {
    let mut h = DistanceHistogram::new();
    for b in batches {
        for m in &b.members {
            h.add(m.distance);
        }
    }
    h
}

/// Distances over all unordered pairs of batch instances, anchor included.
pub fn pairwise_distance_histogram(batches: &[Batch], ds: &ManifestDataset) -> DistanceHistogram {
    let mut h = DistanceHistogram::new();
    for b in batches {
        let inst = b.instances();
        for (k, &i) in inst.iter().enumerate() {
            for &j in &inst[k + 1..] {
                h.add(ds.distance(i, j));
            }
        }
    }
    h
}

/// `n·p − 3·sqrt(n·p·(1−p))`: below this distance a uniform sampler almost
/// never produces negatives. Expects `0 < p < 1`.
pub fn scarcity_lower_bound(n: u32, p: f64) -> f64 {
    let n = n as f64;
    n * p - 3.0 * (n * p * (1.0 - p)).sqrt()
}

/// Binomial(n, p) probabilities for `0..=n`.
pub fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut coef = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            coef *= (n - k + 1) as f64 / k as f64;
        }
        out.push(coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32));
    }
    out
}

/// Total-variation distance; the shorter vector is zero-padded.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).unwrap_or(&0.0) - q.get(i).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Independent batches around uniformly drawn anchors, `draws` negatives
/// requested in total. ManiNeg batches use the schedule's value at step 0,
/// so pass a constant schedule to pin μ. `key` separates repeated calls
/// under one seed.
pub fn demo_batches(
    idx: Option<&HammingIndex>,
    ds: &ManifestDataset,
    strategy: &SamplingStrategy,
    size: usize,
    draws: usize,
    rng: SamplerRng,
    key: u64,
) -> Result<Vec<Batch>> {
    if ds.len() < 2 {
        return Err(Error::ExhaustedCandidates);
    }
    if size < 2 {
        return Err(Error::InvalidParameter(format!("batch size must be ≥ 2, got {size}")));
    }
    let spec = match strategy {
        SamplingStrategy::Maninegs(p) => {
            let idx = idx.ok_or_else(|| Error::InvalidParameter("manifestation-guided sampling needs an index".into()))?;
            idx.check_compatible(ds)?;
            Some((p.spec_at(idx, 0)?, p.policy))
        }
        SamplingStrategy::Uniform { .. } => None,
    };
    let per_batch = match spec {
        Some(_) => size - 1,
        None => size.min(ds.len()) - 1,
    };
    let mut anchors = rng.stream(domain::DEMO, key, u64::MAX);
    let mut out = Vec::with_capacity(draws.div_ceil(per_batch));
    let mut left = draws;
    let mut k = 0;
    while left > 0 {
        let take = left.min(per_batch);
        let anchor = anchors.random_range(0..ds.len());
        let mut g = rng.stream(domain::DEMO, key, k);
        let b = match (&spec, strategy) {
            (Some((s, policy)), _) => {
                sample_batch_maninegs(idx.expect("checked above"), ds, anchor, s, take + 1, *policy, &mut g)?
            }
            (None, SamplingStrategy::Uniform { dedup }) => sample_batch_uniform(ds, anchor, take + 1, *dedup, &mut g)?,
            (None, SamplingStrategy::Maninegs(_)) => unreachable!(),
        };
        out.push(b);
        left -= take;
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Bits, ManifestationSchema};
    use crate::negsampler::sampler::Member;

    #[test]
    fn single_pair_histogram() {
        let ds = ManifestDataset::from_bits(
            ManifestationSchema::flat(4),
            vec![Bits::zeros(4), Bits::from_bools(&[true; 4])],
        )
        .unwrap();
        let b = Batch {
            anchor: 0,
            members: vec![Member {
                id: 1,
                distance: 4,
                fallback_used: false,
            }],
            target_size: 2,
        };
        let h = pairwise_distance_histogram(&[b], &ds);
        assert_eq!(h.counts(), &[0, 0, 0, 0, 1]);
        assert_eq!(h.mean(), Some(4.0));
    }

    #[test]
    fn bound_values() {
        assert_eq!(scarcity_lower_bound(4, 0.5), -1.0);
        assert!((scarcity_lower_bound(35, 0.5) - 8.625_880_325).abs() < 1e-8);
        // the −3σ term outgrows n·p between n = 1 and n = 2, after which the
        // bound increases
        assert!(scarcity_lower_bound(2, 0.5) < scarcity_lower_bound(1, 0.5));
        for n in 2..200 {
            assert!(scarcity_lower_bound(n + 1, 0.5) > scarcity_lower_bound(n, 0.5));
        }
    }

    #[test]
    fn binomial_four() {
        let p = binomial_pmf(4, 0.5);
        assert_eq!(p, vec![0.0625, 0.25, 0.375, 0.25, 0.0625]);
        assert!((total_variation(&p, &[1.0]) - 0.9375).abs() < 1e-15);
    }

    #[test]
    fn demo_draw_accounting() {
        let bits = (0..6u8).map(|v| Bits::from_bools(&[v & 1 != 0, v & 2 != 0, v & 4 != 0])).collect();
        let ds = ManifestDataset::from_bits(ManifestationSchema::flat(3), bits).unwrap();
        let uni = SamplingStrategy::Uniform { dedup: false };
        let bs = demo_batches(None, &ds, &uni, 4, 10, SamplerRng::new(1), 0).unwrap();
        assert_eq!(bs.iter().map(|b| b.members.len()).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert!(demo_batches(None, &ds, &uni, 4, 0, SamplerRng::new(1), 0).unwrap().is_empty());
        let one = ds.subset(&[0]);
        assert!(matches!(
            demo_batches(None, &one, &uni, 4, 10, SamplerRng::new(1), 0),
            Err(Error::ExhaustedCandidates)
        ));
    }

    #[test]
    fn empty_histogram_has_no_mean() {
        let h = DistanceHistogram::new();
        assert_eq!(h.mean(), None);
        assert_eq!(h.rows(2), vec![(0, 0), (1, 0), (2, 0)]);
    }
}
