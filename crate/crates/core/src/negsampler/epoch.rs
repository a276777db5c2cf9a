//! Epoch-ordered batch streams with per-step hardness annealing.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::anneal::AnnealSchedule;
use super::rng::{domain, SamplerRng};
use super::sampler::{sample_batch_maninegs, sample_batch_uniform, Batch, EmptyBucketPolicy};
use super::trunc_gauss::TruncGaussSpec;
use crate::error::{Error, Result};
use crate::hamming_index::HammingIndex;
use crate::manifest::ManifestDataset;

/// Truncated-Gaussian parameters other than the (annealed) mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManiNegParams {
    pub sigma: f64,
    pub a: i64,
    /// Upper bound; `None` uses the index's largest observed distance.
    pub b: Option<i64>,
    #[serde(default)]
    pub policy: EmptyBucketPolicy,
    #[serde(default)]
    pub schedule: AnnealSchedule,
}

impl Default for ManiNegParams {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            a: 1,
            b: None,
            policy: EmptyBucketPolicy::NearestHarder,
            schedule: AnnealSchedule::default(),
        }
    }
}

impl ManiNegParams {
    pub fn upper_bound(&self, idx: &HammingIndex) -> i64 {
        self.b
            .unwrap_or_else(|| (idx.d_max_observed() as i64).max(self.a))
    }

    pub fn spec_at(&self, idx: &HammingIndex, step: u64) -> Result<TruncGaussSpec> {
        TruncGaussSpec::new(self.schedule.mu(step), self.sigma, self.a, self.upper_bound(idx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingStrategy {
    Maninegs(ManiNegParams),
    Uniform { dedup: bool },
}

/// One training step's batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBatch {
    pub step: u64,
    pub epoch: u64,
    /// Truncated-Gaussian mean used for this step (ManiNeg only).
    pub mu: Option<f64>,
    pub batch: Batch,
}

/// Endless stream of batches: each epoch visits every anchor once in a
/// seeded shuffled order.
pub struct EpochIterator<'a> {
    idx: Option<&'a HammingIndex>,
    ds: &'a ManifestDataset,
    strategy: SamplingStrategy,
    size: usize,
    rng: SamplerRng,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
    step: u64,
}

pub fn epoch_iterator<'a>(
    idx: Option<&'a HammingIndex>,
    ds: &'a ManifestDataset,
    strategy: SamplingStrategy,
    size: usize,
    rng: SamplerRng,
) -> Result<EpochIterator<'a>> {
    if ds.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    if let SamplingStrategy::Maninegs(_) = strategy {
        let idx = idx.ok_or_else(|| {
            Error::InvalidParameter("manifestation-guided sampling needs an index".into())
        })?;
        if idx.n_instances() != ds.len() {
            return Err(Error::InvalidParameter("index does not match dataset".into()));
        }
    }
    let mut it = EpochIterator {
        idx,
        ds,
        strategy,
        size,
        rng,
        epoch: 0,
        order: Vec::new(),
        pos: 0,
        step: 0,
    };
    it.reshuffle();
    Ok(it)
}

impl EpochIterator<'_> {
    fn reshuffle(&mut self) {
        self.order = (0..self.ds.len()).collect();
        let mut g = self.rng.stream(domain::SHUFFLE, self.epoch, 0);
        self.order.shuffle(&mut g);
        self.pos = 0;
    }

    /// Anchor order of the current epoch.
    pub fn epoch_order(&self) -> &[usize] {
        &self.order
    }

    fn next_batch(&mut self) -> Result<StepBatch> {
        if self.pos == self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let anchor = self.order[self.pos];
        let mut g = self.rng.stream(domain::BATCH, self.epoch, self.pos as u64);
        let (batch, mu) = match &self.strategy {
            SamplingStrategy::Maninegs(p) => {
                let idx = self.idx.expect("checked at construction");
                let spec = p.spec_at(idx, self.step)?;
                let b = sample_batch_maninegs(
                    idx, self.ds, anchor, &spec, self.size, p.policy, &mut g,
                )?;
                (b, Some(spec.mu))
            }
            SamplingStrategy::Uniform { dedup } => {
                let size = self.size.min(self.ds.len());
                (sample_batch_uniform(self.ds, anchor, size, *dedup, &mut g)?, None)
            }
        };
        let out = StepBatch {
            step: self.step,
            epoch: self.epoch,
            mu,
            batch,
        };
        self.pos += 1;
        self.step += 1;
        Ok(out)
    }
}

impl Iterator for EpochIterator<'_> {
    type Item = Result<StepBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_batch())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogMember {
    pub id: u64,
    pub d: u32,
    pub fallback: bool,
}

/// One line of a batch log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchLogEntry {
    pub step: u64,
    pub anchor: u64,
    pub members: Vec<LogMember>,
}

impl BatchLogEntry {
    /// Uses dataset ids, not ordinals.
    pub fn new(step: u64, batch: &Batch, ds: &ManifestDataset) -> Self {
        let recs = ds.records();
        Self {
            step,
            anchor: recs[batch.anchor].id,
            members: batch
                .members
                .iter()
                .map(|m| LogMember {
                    id: recs[m.id].id,
                    d: m.distance,
                    fallback: m.fallback_used,
                })
                .collect(),
        }
    }
}

/// Writes entries as JSON lines.
pub fn write_batch_log<W: Write>(mut w: W, entries: &[BatchLogEntry]) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<batch log>", e))?;
    }
    Ok(())
}
