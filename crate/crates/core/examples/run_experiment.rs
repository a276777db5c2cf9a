//! A reduced sampler × scenario × seed grid with its summary table.

use maninex::toytrain::{run_experiment_with, write_summary_csv, ExperimentConfig, SyntheticSpec, TrainConfig};

fn main() -> maninex::Result<()> {
    let cfg = ExperimentConfig {
        synthetic: SyntheticSpec { n_instances: 600, ..SyntheticSpec::default() },
        train: TrainConfig { steps: 300, warmup_steps: 30, ..TrainConfig::default() },
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    };
    let report = run_experiment_with(&cfg, |r| {
        let res = &r.result;
        eprintln!("{} {} seed {}: auc {:.4}", res.sampler.name(), res.scenario.name(), res.seed, res.auc);
    })?;
    write_summary_csv(std::io::stdout().lock(), &report.summary)
}
