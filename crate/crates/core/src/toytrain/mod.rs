//! Synthetic pretraining harness.
//!
//! A latent-variable population stands in for images and manifestations.
//! Small dense encoders are pretrained with the contrastive losses under
//! either batch sampler, then evaluated by a linear probe on the
//! representations and by cross-modal alignment of the projections.

pub mod experiment;
pub mod model;
pub mod probe;
pub mod synthetic;
pub mod train;

pub use experiment::{
    fmt_g9, mean_std, run_cell, run_experiment, run_experiment_with, summarize, write_runs_csv,
    write_summary_csv, CellSummary, ExperimentConfig, PreparedData, Report, RunRecord, RunResult,
};
pub use model::{ModelDims, ToyModel};
pub use probe::{alignment_histogram, auc, linear_probe, representations, AlignmentHistogram, LogisticRegression, ProbeConfig};
pub use synthetic::{generate_synthetic, CorrelationMode, Split, SyntheticSpec, SyntheticWorld, ToyData, View};
pub use train::{pretrain, pretrain_observed, project, LossLogEntry, SamplerKind, Scenario, TrainConfig};
