//! Sampler × scenario × seed grid with a shared dataset per experiment.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::probe::{alignment_histogram, linear_probe, AlignmentHistogram, ProbeConfig};
use super::synthetic::{generate_synthetic, Split, SyntheticSpec, ToyData};
use super::train::{pretrain, LossLogEntry, SamplerKind, Scenario, TrainConfig};
use crate::error::Result;
use crate::negsampler::ManiNegParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticSpec,
    /// Fixes the population and its split; run seeds vary everything else.
    pub data_seed: u64,
    pub train: TrainConfig,
    pub maninegs: ManiNegParams,
    pub probe: ProbeConfig,
    pub seeds: Vec<u64>,
    pub samplers: Vec<SamplerKind>,
    pub scenarios: Vec<Scenario>,
    pub histogram_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            data_seed: 2024,
            train: TrainConfig::default(),
            maninegs: ManiNegParams::default(),
            probe: ProbeConfig::default(),
            seeds: (0..10).collect(),
            samplers: vec![SamplerKind::Maninegs, SamplerKind::Uniform],
            scenarios: vec![Scenario::Unimodal, Scenario::Multimodal],
            histogram_bins: 40,
        }
    }
}

/// Population plus split, shared by every cell of an experiment.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub data: ToyData,
    pub split: Split,
}

impl PreparedData {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let data = generate_synthetic(&cfg.synthetic, cfg.data_seed)?;
        let split = Split::seven_one_two(data.len(), cfg.data_seed);
        Ok(Self { data, split })
    }
}

/// Outcome of one (sampler, scenario, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub sampler: SamplerKind,
    pub scenario: Scenario,
    pub seed: u64,
    pub auc: f64,
    /// Multimodal runs only: `f_M` is untrained otherwise.
    pub alignment_mean: Option<f64>,
    pub final_tau: f64,
    pub final_loss: f64,
    pub param_hash: String,
}

/// A run with its full artefacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub result: RunResult,
    pub alignment: Option<AlignmentHistogram>,
    pub loss_log: Vec<LossLogEntry>,
}

/// Trains and evaluates one cell. The model is initialised from `seed`
/// alone, so samplers compared at the same seed share their start point.
pub fn run_cell(
    cfg: &ExperimentConfig,
    prepared: &PreparedData,
    sampler: SamplerKind,
    scenario: Scenario,
    seed: u64,
) -> Result<RunRecord> {
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let PreparedData { data, split } = prepared;
    let mut model = tc.init_model(data);
    let log = pretrain(&mut model, data, &split.train, &sampler.strategy(cfg.maninegs), scenario, &tc)?;
    let auc = linear_probe(&model, data, &split.train, &split.test, cfg.probe)?;
    let alignment = match scenario {
        Scenario::Multimodal => Some(alignment_histogram(&model, data, &split.test, cfg.histogram_bins)?),
        Scenario::Unimodal => None,
    };
    Ok(RunRecord {
        result: RunResult {
            sampler,
            scenario,
            seed,
            auc,
            alignment_mean: alignment.as_ref().map(|a| a.mean),
            final_tau: model.temperature.tau(),
            final_loss: log.last().map_or(f64::NAN, LossLogEntry::objective),
            param_hash: model.param_hash(),
        },
        alignment,
        loss_log: log,
    })
}

/// Mean and unbiased (n − 1) standard deviation; `std` is NaN below two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, if values.len() > 1 { var.sqrt() } else { f64::NAN })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sampler: SamplerKind,
    pub scenario: Scenario,
    pub n_runs: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub alignment_mean: Option<f64>,
    pub alignment_std: Option<f64>,
}

/// Aggregates per (sampler, scenario), independent of run order.
pub fn summarize(runs: &[RunResult]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(SamplerKind, Scenario), Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        cells.entry((r.sampler, r.scenario)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((sampler, scenario), mut rs)| {
            rs.sort_by_key(|r| r.seed);
            let aucs: Vec<f64> = rs.iter().map(|r| r.auc).collect();
            let (auc_mean, auc_std) = mean_std(&aucs);
            let aligns: Vec<f64> = rs.iter().filter_map(|r| r.alignment_mean).collect();
            let (alignment_mean, alignment_std) = if aligns.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&aligns);
                (Some(m), Some(s))
            };
            CellSummary {
                sampler,
                scenario,
                n_runs: rs.len(),
                auc_mean,
                auc_std,
                alignment_mean,
                alignment_std,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunResult>,
    pub summary: Vec<CellSummary>,
}

impl Report {
    /// Sorts runs by cell key so merge order never matters.
    pub fn from_runs(mut runs: Vec<RunResult>) -> Self {
        runs.sort_by_key(|r| (r.sampler, r.scenario, r.seed));
        let summary = summarize(&runs);
        Self { runs, summary }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    run_experiment_with(cfg, |_| {})
}

/// [`run_experiment`] with a callback after each finished cell.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut on_run: impl FnMut(&RunRecord)) -> Result<Report> {
    let prepared = PreparedData::new(cfg)?;
    let mut runs = Vec::new();
    for &scenario in &cfg.scenarios {
        for &seed in &cfg.seeds {
            for &sampler in &cfg.samplers {
                let rec = run_cell(cfg, &prepared, sampler, scenario, seed)?;
                on_run(&rec);
                runs.push(rec.result);
            }
        }
    }
    Ok(Report::from_runs(runs))
}

/// `%.9g`-style formatting used by every CSV writer.
pub fn fmt_g9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..9).contains(&exp) {
        let s = format!("{x:.8e}");
        let (m, e) = s.split_once('e').expect("exponent");
        let m = trim_zeros(m);
        let e: i32 = e.parse().expect("integer exponent");
        return format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g9).unwrap_or_default()
}

/// Per-run CSV: sampler, scenario, seed, auc, alignment_mean, final_tau.
pub fn write_runs_csv<W: Write>(w: W, runs: &[RunResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sampler", "scenario", "seed", "auc", "alignment_mean", "final_tau"])?;
    for r in runs {
        out.write_record([
            r.sampler.name().to_string(),
            r.scenario.name().to_string(),
            r.seed.to_string(),
            fmt_g9(r.auc),
            opt(r.alignment_mean),
            fmt_g9(r.final_tau),
        ])?;
    }
    out.flush().map_err(|e| crate::Error::io("<csv>", e))?;
    Ok(())
}

/// One row per (sampler, scenario) cell.
pub fn write_summary_csv<W: Write>(w: W, cells: &[CellSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "sampler",
        "scenario",
        "n_runs",
        "auc_mean",
        "auc_std",
        "alignment_mean",
        "alignment_std",
    ])?;
    for c in cells {
        out.write_record([
            c.sampler.name().to_string(),
            c.scenario.name().to_string(),
            c.n_runs.to_string(),
            fmt_g9(c.auc_mean),
            fmt_g9(c.auc_std),
            opt(c.alignment_mean),
            opt(c.alignment_std),
        ])?;
    }
    out.flush().map_err(|e| crate::Error::io("<csv>", e))?;
    Ok(())
}
