//! The `maninex` command-line tool.
//!
//! Every artefact is a plot-ready CSV or JSON file under `--out-dir`. Each
//! invocation appends one [`RunManifest`] line to `manifests.jsonl` there;
//! timestamps and wall time live only in that file, so artefacts are
//! byte-identical across reruns with the same inputs and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hamming_index::HammingIndex;
use crate::manifest::{DataFormat, ManifestDataset, ManifestationSchema};
use crate::negsampler::{
    anchor_distance_histogram, demo_batches, epoch_iterator, pairwise_distance_histogram,
    scarcity_lower_bound, write_batch_log, AnnealSchedule, BatchLogEntry, DistanceHistogram,
    SamplerRng, SamplingStrategy,
};
use crate::toytrain::{
    fmt_g9, generate_synthetic, run_cell, write_runs_csv, write_summary_csv, ExperimentConfig,
    PreparedData, Report, RunRecord, SamplerKind, Scenario,
};

#[derive(Debug, Parser)]
#[command(name = "maninex", version, about = "Manifestation-guided negative sampling toolkit")]
pub struct Cli {
    /// Seed for sampling and training (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config JSON; missing fields take built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base directory for outputs and `manifests.jsonl`.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Precompute the Hamming index of a manifestation table.
    Index(IndexArgs),
    /// Distance histograms of sampled batches for a list of μ values.
    Demo(DemoArgs),
    /// Scarcity lower bound n·p − 3·sqrt(n·p·(1−p)) for n = 1..=n_max.
    Bound(BoundArgs),
    /// Stream annealed training batches to a JSON-lines log.
    Sample(SampleArgs),
    /// Pretrain and evaluate one (sampler, scenario, seed) cell, or the grid.
    Train(TrainArgs),
    /// Aggregate run files into per-run and per-cell tables.
    Report(ReportArgs),
    /// Write the synthetic population's manifestation table.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Manifestation table (.csv or .json).
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON; defaults to the 35-bit mammography schema.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "index.mnix")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Maninegs,
    Uniform,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Maninegs => SamplerKind::Maninegs,
            SamplerArg::Uniform => SamplerKind::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Uni,
    Multi,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Uni => Scenario::Unimodal,
            ScenarioArg::Multi => Scenario::Multimodal,
        }
    }
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Prebuilt index; built in memory when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![11.0, 7.0, 3.0, 0.0])]
    pub mu: Vec<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub a: Option<i64>,
    /// Upper bound, or `auto` for the largest observed distance.
    #[arg(long)]
    pub b: Option<String>,
    /// Negatives requested per μ value.
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, value_enum, default_value = "maninegs")]
    pub sampler: SamplerArg,
    /// Output stem: `<stem>_mu<μ>_anchor.csv`, `<stem>_mu<μ>_pairs.csv`,
    /// `<stem>_summary.csv`.
    #[arg(long, default_value = "demo.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 200)]
    pub n_max: u32,
    #[arg(long, default_value = "bound.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "maninegs")]
    pub sampler: SamplerArg,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value = "batches.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, required_unless_present = "grid")]
    pub sampler: Option<SamplerArg>,
    #[arg(long, value_enum, required_unless_present = "grid")]
    pub scenario: Option<ScenarioArg>,
    /// Run every cell of the config into `<out-dir>/runs/`.
    #[arg(long, conflicts_with_all = ["sampler", "scenario"])]
    pub grid: bool,
    #[arg(long, default_value = "run.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of run JSON files.
    #[arg(long)]
    pub runs: PathBuf,
    /// Per-run CSV; `<stem>_summary.csv` and `<stem>.json` go beside it.
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "synthetic.csv")]
    pub out: PathBuf,
}

/// Provenance record for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub code_version: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Input and output bookkeeping for one command.
struct Session {
    out_dir: PathBuf,
    quiet: bool,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Session {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(FileHash {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn out_path(&self, p: &Path) -> PathBuf {
        self.out_dir.join(p)
    }

    /// Writes, reads back and compares, then records the hash.
    fn write(&mut self, rel: &Path, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let back = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if back != bytes {
            return Err(Error::io(&path, std::io::Error::other("read-back mismatch")));
        }
        self.outputs.push(FileHash {
            path: path.clone(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn load_config(s: &mut Session, path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(serde_json::from_slice(&s.read(p)?)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_data(s: &mut Session, args: &DataArgs) -> Result<ManifestDataset> {
    let format = DataFormat::from_path(&args.data).ok_or_else(|| Error::Parse {
        row: None,
        message: format!("{}: expected a .csv or .json extension", args.data.display()),
    })?;
    let schema = match &args.schema {
        Some(p) => {
            s.read(p)?;
            ManifestationSchema::load(p)?
        }
        None => ManifestationSchema::default(),
    };
    s.read(&args.data)?;
    ManifestDataset::load_with_schema(&args.data, format, schema)
}

fn load_or_build_index(s: &mut Session, path: Option<&Path>, ds: &ManifestDataset) -> Result<HammingIndex> {
    let idx = match path {
        Some(p) => HammingIndex::from_bytes(&s.read(p)?)?,
        None => HammingIndex::build(ds)?,
    };
    idx.check_compatible(ds)?;
    Ok(idx)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

fn histogram_csv(h: &DistanceHistogram, d_max: u32) -> Result<Vec<u8>> {
    csv_bytes(
        &["distance", "count"],
        h.rows(d_max).into_iter().map(|(d, c)| vec![d.to_string(), c.to_string()]),
    )
}

/// `<stem><suffix>.<ext>` beside `path`.
fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn mu_tag(mu: f64) -> String {
    fmt_g9(mu).replace('-', "m")
}

fn opt_g9(x: Option<f64>) -> String {
    x.map(fmt_g9).unwrap_or_default()
}

fn cmd_index(s: &mut Session, a: &IndexArgs) -> Result<()> {
    let ds = load_data(s, &a.data)?;
    let idx = HammingIndex::build(&ds)?;
    let bytes = idx.to_bytes();
    if HammingIndex::from_bytes(&bytes)? != idx {
        return Err(Error::InvalidParameter("index failed its round-trip check".into()));
    }
    let path = s.write(&a.out, &bytes)?;
    s.say(format!("N {}", idx.n_instances()));
    s.say(format!("d_max_observed {}", idx.d_max_observed()));
    let occ: Vec<String> = idx
        .occupancy()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(d, c)| format!("{d}:{c}"))
        .collect();
    s.say(format!("anchors with nonempty bucket (distance:anchors) {}", occ.join(" ")));
    s.say(format!("wrote {}", path.display()));
    Ok(())
}

fn cmd_demo(s: &mut Session, cfg: &ExperimentConfig, seed: u64, a: &DemoArgs) -> Result<()> {
    let ds = load_data(s, &a.data)?;
    let idx = match a.sampler {
        SamplerArg::Maninegs => Some(load_or_build_index(s, a.index.as_deref(), &ds)?),
        SamplerArg::Uniform => None,
    };
    let mut params = cfg.maninegs;
    if let Some(sigma) = a.sigma {
        params.sigma = sigma;
    }
    if let Some(lo) = a.a {
        params.a = lo;
    }
    match a.b.as_deref() {
        None => {}
        Some("auto") => params.b = None,
        Some(v) => {
            params.b = Some(v.parse().map_err(|_| Error::InvalidParameter(format!("--b expects an integer or `auto`, got `{v}`")))?)
        }
    }
    let size = a.size.unwrap_or(cfg.train.batch_size);
    let d_max = ds.schema().len() as u32;
    let mus: Vec<Option<f64>> = match a.sampler {
        SamplerArg::Maninegs => a.mu.iter().map(|&m| Some(m)).collect(),
        SamplerArg::Uniform => vec![None],
    };
    let mut summary = Vec::new();
    for (k, mu) in mus.iter().enumerate() {
        let strategy = match mu {
            Some(m) => SamplingStrategy::Maninegs(crate::negsampler::ManiNegParams {
                schedule: AnnealSchedule::constant(*m),
                ..params
            }),
            None => SamplingStrategy::Uniform { dedup: false },
        };
        let batches = demo_batches(idx.as_ref(), &ds, &strategy, size, a.draws, SamplerRng::new(seed), k as u64)?;
        let anchor = anchor_distance_histogram(&batches);
        let pairs = pairwise_distance_histogram(&batches, &ds);
        let tag = mu.map_or_else(|| "_uniform".to_string(), |m| format!("_mu{}", mu_tag(m)));
        s.write(&sibling(&a.out, &format!("{tag}_anchor"), "csv"), &histogram_csv(&anchor, d_max)?)?;
        s.write(&sibling(&a.out, &format!("{tag}_pairs"), "csv"), &histogram_csv(&pairs, d_max)?)?;
        let mean_len = batches.iter().map(|b| b.len()).sum::<usize>() as f64 / batches.len().max(1) as f64;
        s.say(format!(
            "{} batches {} anchor_mean {} pairwise_mean {}",
            mu.map_or("uniform".to_string(), |m| format!("mu {}", fmt_g9(m))),
            batches.len(),
            opt_g9(anchor.mean()),
            opt_g9(pairs.mean()),
        ));
        summary.push(vec![
            mu.map(fmt_g9).unwrap_or_default(),
            batches.len().to_string(),
            anchor.total().to_string(),
            opt_g9(anchor.mean()),
            opt_g9(pairs.mean()),
            if batches.is_empty() { String::new() } else { fmt_g9(mean_len) },
        ]);
    }
    let bytes = csv_bytes(
        &["mu", "batches", "negatives", "anchor_mean", "pairwise_mean", "mean_batch_len"],
        summary,
    )?;
    s.write(&sibling(&a.out, "_summary", "csv"), &bytes)?;
    Ok(())
}

fn cmd_bound(s: &mut Session, a: &BoundArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.p) {
        return Err(Error::InvalidParameter(format!("--p must lie in [0, 1], got {}", a.p)));
    }
    let rows = (1..=a.n_max).map(|n| {
        let mean = n as f64 * a.p;
        vec![
            n.to_string(),
            fmt_g9(mean),
            fmt_g9((mean * (1.0 - a.p)).sqrt()),
            fmt_g9(scarcity_lower_bound(n, a.p)),
        ]
    });
    let path = s.write(&a.out, &csv_bytes(&["n", "mean", "sd", "bound"], rows)?)?;
    s.say(format!("wrote {} ({} rows)", path.display(), a.n_max));
    Ok(())
}

fn cmd_sample(s: &mut Session, cfg: &ExperimentConfig, seed: u64, a: &SampleArgs) -> Result<()> {
    let ds = load_data(s, &a.data)?;
    let kind = SamplerKind::from(a.sampler);
    let idx = match kind {
        SamplerKind::Maninegs => Some(load_or_build_index(s, a.index.as_deref(), &ds)?),
        SamplerKind::Uniform => None,
    };
    let size = a.size.unwrap_or(cfg.train.batch_size);
    let it = epoch_iterator(idx.as_ref(), &ds, kind.strategy(cfg.maninegs), size, SamplerRng::new(seed))?;
    let entries: Vec<BatchLogEntry> = it
        .take(a.steps)
        .map(|sb| sb.map(|sb| BatchLogEntry::new(sb.step, &sb.batch, &ds)))
        .collect::<Result<_>>()?;
    let mut buf = Vec::new();
    write_batch_log(&mut buf, &entries)?;
    let path = s.write(&a.out, &buf)?;
    let mean = entries.iter().map(|e| e.members.len() + 1).sum::<usize>() as f64 / entries.len().max(1) as f64;
    s.say(format!("{} batches, mean size {}, wrote {}", entries.len(), fmt_g9(mean), path.display()));
    Ok(())
}

fn loss_log_bytes(rec: &RunRecord) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for e in &rec.loss_log {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn write_run(s: &mut Session, rel: &Path, rec: &RunRecord) -> Result<()> {
    s.write(rel, &serde_json::to_vec_pretty(rec)?)?;
    s.write(&sibling(rel, ".losses", "jsonl"), &loss_log_bytes(rec)?)?;
    let r = &rec.result;
    let align = r.alignment_mean.map(|m| format!(" alignment {}", fmt_g9(m))).unwrap_or_default();
    s.say(format!(
        "{} {} seed {}: auc {}{align} tau {}",
        r.sampler.name(),
        r.scenario.name(),
        r.seed,
        fmt_g9(r.auc),
        fmt_g9(r.final_tau)
    ));
    Ok(())
}

fn cmd_train(s: &mut Session, cfg: &ExperimentConfig, seed: Option<u64>, a: &TrainArgs) -> Result<()> {
    let prepared = PreparedData::new(cfg)?;
    if a.grid {
        let seeds = seed.map_or_else(|| cfg.seeds.clone(), |k| vec![k]);
        for &scenario in &cfg.scenarios {
            for &k in &seeds {
                for &sampler in &cfg.samplers {
                    let rec = run_cell(cfg, &prepared, sampler, scenario, k)?;
                    let rel = PathBuf::from("runs").join(format!("{}_{}_seed{k}.json", sampler.name(), scenario.name()));
                    write_run(s, &rel, &rec)?;
                }
            }
        }
        return Ok(());
    }
    let sampler = a.sampler.expect("clap enforces --sampler").into();
    let scenario = a.scenario.expect("clap enforces --scenario").into();
    let rec = run_cell(cfg, &prepared, sampler, scenario, seed.unwrap_or(cfg.train.seed))?;
    write_run(s, &a.out, &rec)
}

fn cmd_report(s: &mut Session, a: &ReportArgs) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(&a.runs)
        .map_err(|e| Error::io(&a.runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!("no run files in {}", a.runs.display())));
    }
    let mut runs = Vec::with_capacity(files.len());
    for f in &files {
        let rec: RunRecord = serde_json::from_slice(&s.read(f)?)
            .map_err(|e| Error::Parse { row: None, message: format!("{}: {e}", f.display()) })?;
        runs.push(rec.result);
    }
    let report = Report::from_runs(runs);
    let mut buf = Vec::new();
    write_runs_csv(&mut buf, &report.runs)?;
    s.write(&a.out, &buf)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &report.summary)?;
    s.write(&sibling(&a.out, "_summary", "csv"), &buf)?;
    s.write(&sibling(&a.out, "", "json"), &serde_json::to_vec_pretty(&report)?)?;
    for c in &report.summary {
        let align = match (c.alignment_mean, c.alignment_std) {
            (Some(m), Some(sd)) => format!(" alignment {} ± {}", fmt_g9(m), fmt_g9(sd)),
            _ => String::new(),
        };
        s.say(format!(
            "{} {} n={} auc {} ± {}{align}",
            c.sampler.name(),
            c.scenario.name(),
            c.n_runs,
            fmt_g9(c.auc_mean),
            fmt_g9(c.auc_std),
        ));
    }
    Ok(())
}

fn cmd_synth(s: &mut Session, cfg: &ExperimentConfig, seed: u64, a: &SynthArgs) -> Result<()> {
    let data = generate_synthetic(&cfg.synthetic, seed)?;
    let format = DataFormat::from_path(&a.out).unwrap_or(DataFormat::Csv);
    let bytes = data.dataset.to_bytes(format)?;
    let path = s.write(&a.out, &bytes)?;
    s.say(format!("{} instances, {} bits, wrote {}", data.len(), data.dataset.schema().len(), path.display()));
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Index(_) => "index",
        Command::Demo(_) => "demo",
        Command::Bound(_) => "bound",
        Command::Sample(_) => "sample",
        Command::Train(_) => "train",
        Command::Report(_) => "report",
        Command::Synth(_) => "synth",
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut s = Session {
        out_dir: cli.out_dir.clone(),
        quiet: cli.quiet,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let cfg = load_config(&mut s, cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(cfg.train.seed);
    let seed_used = match &cli.command {
        Command::Index(a) => cmd_index(&mut s, a).map(|_| None),
        Command::Demo(a) => cmd_demo(&mut s, &cfg, seed, a).map(|_| Some(seed)),
        Command::Bound(a) => cmd_bound(&mut s, a).map(|_| None),
        Command::Sample(a) => cmd_sample(&mut s, &cfg, seed, a).map(|_| Some(seed)),
        Command::Train(a) => cmd_train(&mut s, &cfg, cli.seed, a).map(|_| cli.seed.or(Some(cfg.train.seed))),
        Command::Report(a) => cmd_report(&mut s, a).map(|_| None),
        Command::Synth(a) => {
            let k = cli.seed.unwrap_or(cfg.data_seed);
            cmd_synth(&mut s, &cfg, k, a).map(|_| Some(k))
        }
    }?;
    let manifest = RunManifest {
        command: command_name(&cli.command).into(),
        args: argv,
        config: serde_json::to_value(&cfg)?,
        seed: seed_used,
        code_version: env!("CARGO_PKG_VERSION").into(),
        inputs: s.inputs,
        outputs: s.outputs,
        started_unix_s,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    append_manifest(&cli.out_dir, &manifest)
}

fn append_manifest(out_dir: &Path, m: &RunManifest) -> Result<()> {
    use std::io::Write;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("manifests.jsonl");
    let mut line = serde_json::to_vec(m)?;
    line.push(b'\n');
    fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .and_then(|mut f| f.write_all(&line))
        .map_err(|e| Error::io(&path, e))
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match run(&cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
