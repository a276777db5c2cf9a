//! Manifestation-guided negative sampling.
//!
//! Distances to the anchor are drawn from a truncated Gaussian whose mean is
//! annealed toward zero over training, one candidate is picked uniformly from
//! the precomputed bucket at each drawn distance, and the batch is
//! deduplicated by manifestation. A uniform sampler is provided as the
//! baseline.

pub mod analysis;
pub mod anneal;
pub mod epoch;
pub mod rng;
pub mod sampler;
pub mod trunc_gauss;

pub use analysis::{
    anchor_distance_histogram, binomial_pmf, demo_batches, pairwise_distance_histogram, scarcity_lower_bound,
    total_variation, DistanceHistogram,
};
pub use anneal::{anneal_mu, AnnealSchedule};
pub use epoch::{
    epoch_iterator, write_batch_log, BatchLogEntry, EpochIterator, LogMember, ManiNegParams,
    SamplingStrategy, StepBatch,
};
pub use rng::{domain, SamplerRng};
pub use sampler::{
    deduplicate, draw_negatives, sample_batch_maninegs, sample_batch_uniform, Batch,
    EmptyBucketPolicy, Member,
};
pub use trunc_gauss::{trunc_gauss_pmf, DiscreteSampler, TruncGaussSpec};
