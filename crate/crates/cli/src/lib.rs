//! Commands behind the `lanecast` binary. Each `cmd_*` function is a whole
//! command minus argument parsing, so tests can drive them directly.

pub mod heatmap;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use lanecast_core::data::{
    build_samples, prepare_dataset, read_records, split_dataset, write_records, CorridorShape, LoopRecord,
    NormalizationParams, RecordGrid, Sample, WindowStats,
};
use lanecast_core::eval::{evaluate, predict_multistep, save_loss_curve, AccuracyMetric, EvalReport};
use lanecast_core::experiment::{save_sweep, sweep, train_and_evaluate, SweepAxis, SweepRun};
use lanecast_core::io::write_atomic;
use lanecast_core::model::{load_bundle, save_bundle, ArchitectureConfig};
use lanecast_core::synth::{generate, SynthConfig};
use lanecast_core::train::TrainConfig;
use lanecast_core::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const ARCHIVE_FORMAT: &str = "lanecast-samples";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Share of windows, oldest first, used for training.
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub horizons: Vec<usize>,
    pub metric: AccuracyMetric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizons: vec![1, 2, 3],
            metric: AccuracyMetric::default(),
        }
    }
}

/// Fallbacks for command-line paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a run needs, as one JSON document.
///
/// The corridor shape lives only at the top level and is copied into the
/// model and generator sections, so the two cannot disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub shape: CorridorShape,
    #[serde(default)]
    pub model: ArchitectureConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            shape: CorridorShape::default(),
            model: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> lanecast_core::Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        for section in ["model", "synth"] {
            if value.get(section).and_then(|s| s.get("shape")).is_some() {
                return Err(Error::Config(format!(
                    "`{section}.shape` is not allowed; set the top-level `shape` instead"
                )));
            }
        }
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.shape.validate()?;
        cfg.sync_shape();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// The config at `path`, or the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    fn sync_shape(&mut self) {
        self.model.shape = self.shape;
        self.synth.shape = self.shape;
    }

    /// Replaces every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    /// The document form, with the shape only at the top level.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        for section in ["model", "synth"] {
            if let Some(obj) = value.get_mut(section).and_then(|s| s.as_object_mut()) {
                obj.remove("shape");
            }
        }
        serde_json::to_string_pretty(&value).expect("config serializes")
    }
}

/// Process exit status for an error: 1 for usage and configuration
/// problems, 3 for numeric failures, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::InvalidArgument(_) => 1,
                Error::Numeric(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

#[derive(Debug, Parser)]
#[command(name = "lanecast", version, about = "Lane-level traffic speed forecasting")]
pub struct Cli {
    /// Log progress; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corridor as a records CSV.
    Synth(SynthArgs),
    /// Window and normalize a records CSV into a sample archive.
    Convert(ConvertArgs),
    /// Train a model and evaluate it on the held-out period.
    Train(TrainArgs),
    /// Write multi-step forecasts for every window in a records CSV.
    Predict(PredictArgs),
    /// Score a trained model against a records CSV.
    Evaluate(EvaluateArgs),
    /// Train once per λ or learning rate and tabulate the results.
    Sweep(SweepArgs),
    /// Emit truth and prediction heat maps for a range of days.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub days: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Records CSV; without it the synthetic corpus from the config is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Prefix for `<out>.json`, `<out>_loss.csv` and `<out>_eval.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    /// Only the windows after the training period.
    #[default]
    Test,
    All,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Prefix for `<out>_eval.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `lambda` or `lr`.
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated values; defaults to the axis's standard grid.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Prefix for `<out>_sweep.csv` and `<out>_curves.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// First day, counted from 0 at the first record.
    #[arg(long, default_value_t = 0)]
    pub day: usize,
    #[arg(long, default_value_t = 1)]
    pub days: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn required(flag: Option<&PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(fallback)
        .cloned()
        .ok_or_else(|| Error::InvalidArgument(format!("--{name} is required")).into())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn load_records(cfg: &RunConfig, data: Option<&PathBuf>) -> Result<Vec<LoopRecord>> {
    match data.or(cfg.paths.data.as_ref()) {
        Some(path) => read_records(path).with_context(|| format!("reading records from {}", path.display())),
        None => {
            info!("no --data given; generating the synthetic corpus (seed {})", cfg.synth.seed);
            Ok(generate(&cfg.synth)?)
        }
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<usize> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(days) = args.days {
        cfg.synth.days = days;
    }
    let out = required(args.out.as_ref(), cfg.paths.out.as_ref(), "out")?;
    let records = generate(&cfg.synth)?;
    write_records(&out, &records).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} records ({} days, seed {}) to {}",
        records.len(),
        cfg.synth.days,
        cfg.synth.seed,
        out.display()
    );
    Ok(records.len())
}

/// Normalized, split samples with the bounds needed to read them back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleArchive {
    pub format: String,
    pub version: u32,
    pub shape: CorridorShape,
    pub normalization: NormalizationParams,
    pub train_fraction: f64,
    pub stats: WindowStats,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<SampleArchive> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let data = required(args.data.as_ref(), cfg.paths.data.as_ref(), "data")?;
    let out = required(args.out.as_ref(), cfg.paths.out.as_ref(), "out")?;
    let records = load_records(&cfg, Some(&data))?;
    let ds = prepare_dataset(&records, cfg.shape, cfg.data.train_fraction)?;
    let archive = SampleArchive {
        format: ARCHIVE_FORMAT.into(),
        version: SCHEMA_VERSION,
        shape: ds.shape,
        normalization: ds.norm,
        train_fraction: cfg.data.train_fraction,
        stats: ds.stats,
        train: ds.train,
        test: ds.test,
    };
    write_atomic(&out, |w| serde_json::to_writer(w, &archive).map_err(|e| Error::Io(e.into())))
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} training and {} test samples ({} windows dropped) to {}",
        archive.train.len(),
        archive.test.len(),
        archive.stats.dropped,
        out.display()
    );
    Ok(archive)
}

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub bundle: PathBuf,
    pub loss_curve: PathBuf,
    pub eval: PathBuf,
    pub report: EvalReport,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutputs> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let prefix = required(args.out.as_ref(), cfg.paths.out.as_ref(), "out")?;
    let horizons = args.horizons.clone().unwrap_or_else(|| cfg.eval.horizons.clone());
    let records = load_records(&cfg, args.data.as_ref())?;
    let ds = prepare_dataset(&records, cfg.shape, cfg.data.train_fraction)?;
    info!("{} training and {} test samples", ds.train.len(), ds.test.len());
    let run = train_and_evaluate(&cfg.model, &cfg.train, &ds, &horizons, cfg.eval.metric)?;

    let outputs = TrainOutputs {
        bundle: with_suffix(&prefix, ".json"),
        loss_curve: with_suffix(&prefix, "_loss.csv"),
        eval: with_suffix(&prefix, "_eval.csv"),
        report: run.report,
    };
    save_bundle(&outputs.bundle, &run.network, &ds.norm)?;
    save_loss_curve(&outputs.loss_curve, &outputs.report.loss_curve)?;
    outputs.report.save_csv(&outputs.eval)?;

    if let Some(last) = outputs.report.loss_curve.last() {
        let test = last.test_loss.map(|t| format!("{t:.6e}")).unwrap_or_else(|| "n/a".into());
        println!(
            "trained {} epochs on {} samples: train loss {:.6e}, test loss {test}",
            last.epoch,
            ds.train.len(),
            last.train_loss
        );
    }
    print!("{}", outputs.report.table());
    println!("bundle written to {}", outputs.bundle.display());
    Ok(outputs)
}

/// Samples built with the bundle's normalization, restricted to `split`.
fn bundle_samples(
    records: &[LoopRecord],
    shape: CorridorShape,
    norm: &NormalizationParams,
    split: Split,
    train_fraction: f64,
) -> Result<Vec<Sample>> {
    let (samples, _) = build_samples(records, shape, norm)?;
    Ok(match split {
        Split::All => samples,
        Split::Test => split_dataset(samples, train_fraction)?.1,
    })
}

pub fn cmd_predict(args: &PredictArgs) -> Result<usize> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let bundle_path = required(args.bundle.as_ref(), cfg.paths.bundle.as_ref(), "bundle")?;
    let data = required(args.data.as_ref(), cfg.paths.data.as_ref(), "data")?;
    let out = required(args.out.as_ref(), cfg.paths.out.as_ref(), "out")?;
    let horizons = args.horizons.clone().unwrap_or_else(|| vec![1]);
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::InvalidArgument(format!("horizons must be positive, got {horizons:?}")).into());
    }
    let bundle = load_bundle(&bundle_path).with_context(|| format!("loading {}", bundle_path.display()))?;
    let shape = bundle.network.config().shape;
    let records = load_records(&cfg, Some(&data))?;
    let samples = bundle_samples(&records, shape, &bundle.norm, Split::All, cfg.data.train_fraction)?;
    let max_h = *horizons.iter().max().expect("non-empty");

    let mut rows = 0;
    write_atomic(&out, |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["origin_timestamp", "horizon", "target_timestamp", "detector_index", "lane", "speed", "volume"])?;
        for s in &samples {
            let rollout = predict_multistep(&bundle.network, s, max_h)?;
            for &h in &horizons {
                let pred = &rollout[h - 1];
                for i in 0..shape.k {
                    for l in 0..shape.c {
                        let idx = i * shape.c + l;
                        w.write_record([
                            s.origin_timestamp.to_string(),
                            h.to_string(),
                            (s.origin_timestamp + h as i64 * shape.interval).to_string(),
                            (i + 1).to_string(),
                            (l + 1).to_string(),
                            bundle.norm.raw_speed(pred.pred_u[idx]).to_string(),
                            bundle.norm.raw_volume(pred.pred_q[idx]).to_string(),
                        ])?;
                        rows += 1;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    })
    .with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {rows} forecasts for {} windows to {}", samples.len(), out.display());
    Ok(rows)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvalReport> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let bundle_path = required(args.bundle.as_ref(), cfg.paths.bundle.as_ref(), "bundle")?;
    let data = required(args.data.as_ref(), cfg.paths.data.as_ref(), "data")?;
    let horizons = args.horizons.clone().unwrap_or_else(|| cfg.eval.horizons.clone());
    let bundle = load_bundle(&bundle_path).with_context(|| format!("loading {}", bundle_path.display()))?;
    let records = load_records(&cfg, Some(&data))?;
    let shape = bundle.network.config().shape;
    let samples = bundle_samples(&records, shape, &bundle.norm, args.split, cfg.data.train_fraction)?;
    let report = evaluate(&bundle.network, &samples, &horizons, &bundle.norm, cfg.eval.metric)?;
    print!("{}", report.table());
    if let Some(prefix) = args.out.as_ref().or(cfg.paths.out.as_ref()) {
        let path = with_suffix(prefix, "_eval.csv");
        report.save_csv(&path)?;
        println!("report written to {}", path.display());
    }
    Ok(report)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRun>> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let prefix = required(args.out.as_ref(), cfg.paths.out.as_ref(), "out")?;
    let values = args.values.clone().unwrap_or_else(|| args.axis.default_grid());
    let records = load_records(&cfg, args.data.as_ref())?;
    let ds = prepare_dataset(&records, cfg.shape, cfg.data.train_fraction)?;
    let runs = sweep(args.axis, &values, &cfg.model, &cfg.train, &ds, cfg.eval.metric)?;
    let table = with_suffix(&prefix, "_sweep.csv");
    let curves = with_suffix(&prefix, "_curves.csv");
    save_sweep(&table, &curves, &runs)?;
    println!("{:>12} {:>12} {:>14}", args.axis, "accuracy_h1", "final_train");
    for r in &runs {
        let acc = r.accuracy_h1.map(|a| format!("{a:.2}")).unwrap_or_else(|| "diverged".into());
        let loss = r.final_train_loss.map(|l| format!("{l:.4e}")).unwrap_or_default();
        println!("{:>12} {acc:>12} {loss:>14}", r.value);
    }
    println!("sweep written to {} and {}", table.display(), curves.display());
    Ok(runs)
}

pub fn cmd_heatmap(args: &HeatmapArgs) -> Result<Vec<PathBuf>> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let bundle_path = required(args.bundle.as_ref(), cfg.paths.bundle.as_ref(), "bundle")?;
    let data = required(args.data.as_ref(), cfg.paths.data.as_ref(), "data")?;
    let prefix = required(args.out.as_ref(), cfg.paths.out.as_ref(), "out")?;
    let bundle = load_bundle(&bundle_path).with_context(|| format!("loading {}", bundle_path.display()))?;
    let records = load_records(&cfg, Some(&data))?;
    let grid = RecordGrid::from_records(&records, bundle.network.config().shape)?;
    let maps = heatmap::build_heatmaps(&bundle.network, &grid, &bundle.norm, args.day, args.days)?;
    let written = maps.save(&prefix)?;
    println!("wrote {} heat map files with prefix {}", written.len(), prefix.display());
    Ok(written)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(drop),
        Command::Convert(a) => cmd_convert(a).map(drop),
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Predict(a) => cmd_predict(a).map(drop),
        Command::Evaluate(a) => cmd_evaluate(a).map(drop),
        Command::Sweep(a) => cmd_sweep(a).map(drop),
        Command::Heatmap(a) => cmd_heatmap(a).map(drop),
    }
}
