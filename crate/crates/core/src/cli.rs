//! Command-line surface: subcommands, run configuration, artifact manifests.
//!
//! Every subcommand writes its outputs plus a `manifest.json` (config echo,
//! input and artifact SHA-256 hashes) into its `--out` directory. Exit codes:
//! 0 success, 1 data or configuration error, 2 usage error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{
    self, build_fold_plan, feature_selection_sweep, run_backtest_with_models, search_weights, window_sweep,
    BacktestConfig, QuarterSpan, WeightScope, WeightsMode, DEFAULT_THRESHOLDS, SWEEP_SIZES,
};
use crate::domain::{read_csv, write_csv, SegmentKey};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Featurizer};
use crate::gbdt::{dump_text, feature_importance, Hyperparams};
use crate::imbalance::{ClassWeights, ObjectiveSpec};
use crate::labeling::{class_count_table, derive_labels, read_labeled, write_labeled, LabeledDataset, Quarter};
use crate::report::{emit_report, format_fixed, ReportSet, DECIMALS};
use crate::synthgen::{generate_portfolio, GeneratorConfig};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const SNAPSHOTS_NAME: &str = "snapshots.csv";
pub const LABELED_NAME: &str = "labeled.bin";

/// Pipeline configuration shared by the modeling subcommands (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Labeled dataset (`labeled.bin` or the directory holding it).
    pub dataset: Option<PathBuf>,
    /// Segments to process as `BU/GEO`; all when absent.
    pub segments: Option<Vec<String>>,
    /// Feature spec file; overrides `features` when set.
    pub schema: Option<PathBuf>,
    pub features: FeatureSpec,
    pub hyperparams: Hyperparams,
    pub train_window: usize,
    pub test_window: usize,
    pub mode: WeightsMode,
    pub scope: WeightScope,
    pub fixed_weights: Option<ClassWeights>,
    pub grid_resolution: usize,
    pub bayes_budget: usize,
    pub objective: ObjectiveSpec,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BacktestConfig::default();
        RunConfig {
            dataset: None,
            segments: None,
            schema: None,
            features: b.features,
            hyperparams: b.hyperparams,
            train_window: 4,
            test_window: 1,
            mode: b.mode,
            scope: b.scope,
            fixed_weights: None,
            grid_resolution: b.grid_resolution,
            bayes_budget: b.bayes_budget,
            objective: b.objective,
            output: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn backtest_config(&self, mode: WeightsMode) -> Result<BacktestConfig> {
        let features = match &self.schema {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
            }
            None => self.features.clone(),
        };
        let config = BacktestConfig {
            mode,
            scope: self.scope,
            fixed_weights: self.fixed_weights,
            hyperparams: self.hyperparams.clone(),
            objective: self.objective,
            features,
            grid_resolution: self.grid_resolution,
            bayes_budget: self.bayes_budget,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the manifest's directory.
    pub artifacts: Vec<FileHash>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    /// Checks every artifact listed in a manifest against its recorded hash.
    pub fn verify(manifest_path: &Path) -> Result<usize> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        for a in &manifest.artifacts {
            let path = dir.join(&a.path);
            if !path.exists() {
                return Err(Error::DataIntegrity(format!("artifact {} is missing", a.path)));
            }
            let actual = sha256_file(&path)?;
            if actual != a.sha256 {
                return Err(Error::DataIntegrity(format!(
                    "artifact {} hash {actual} does not match recorded {}",
                    a.path, a.sha256
                )));
            }
        }
        Ok(manifest.artifacts.len())
    }
}

/// Collects outputs of one command and writes its manifest.
struct Outputs {
    dir: PathBuf,
    started: Instant,
    inputs: Vec<FileHash>,
    artifacts: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            started: Instant::now(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(PathBuf::from(name));
        Ok(path)
    }

    fn finish(self, command: &str, config: &impl Serialize) -> Result<PathBuf> {
        let artifacts = self
            .artifacts
            .iter()
            .map(|rel| {
                Ok(FileHash {
                    path: rel.display().to_string(),
                    sha256: sha256_file(&self.dir.join(rel))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            inputs: self.inputs,
            artifacts,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug, Parser)]
#[command(name = "tender-risk", version, about = "Outcome-risk modeling for tender pipelines")]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes output bytes.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic snapshot portfolio.
    Synth(SynthArgs),
    /// Derive labels and split the snapshots by segment.
    Prepare(PrepareArgs),
    /// Fit the feature pipeline and write the feature matrix.
    Featurize(ModelArgs),
    /// Train one segment model.
    Train(TrainArgs),
    /// Rolling-window backtest.
    Backtest(BacktestArgs),
    /// Search class weights on a train span.
    Optimize(OptimizeArgs),
    /// Backtest over a range of train window lengths.
    SweepWindow(SweepWindowArgs),
    /// Importance-threshold feature removal sweep.
    SelectFeatures(SelectArgs),
    /// Re-emit a report CSV or verify a manifest.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config (JSON); the built-in two-segment example when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Snapshot CSV, or a directory holding `snapshots.csv`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (default: the input's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `labeled.bin`, or the directory holding it.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Segment(s) as BU/GEO; repeatable.
    #[arg(long = "segment")]
    pub segments: Vec<String>,
    /// Feature spec (JSON).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fit on rows up to and including this quarter (e.g. 2018Q4).
    #[arg(long)]
    pub train_until: Option<Quarter>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Class weights JSON (`{"raw": [..4 values in (0,1)..]}`).
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Weights mode(s): none, grid, bayes, fixed. Repeatable or comma-separated.
    #[arg(long = "mode", value_delimiter = ',', value_parser = parse_mode)]
    pub modes: Vec<WeightsMode>,
    #[arg(long)]
    pub train_window: Option<usize>,
    #[arg(long)]
    pub test_window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// grid or bayes.
    #[arg(long, value_parser = parse_mode, default_value = "bayes")]
    pub method: WeightsMode,
}

#[derive(Debug, Args)]
pub struct SweepWindowArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<WeightsMode>,
    /// Train window lengths; default 2..10.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub test_window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<WeightsMode>,
    /// Split-count thresholds; default 0,10,20,30.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON to re-emit as CSV.
    #[arg(long, required_unless_present = "verify")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest whose artifacts are checked against their hashes.
    #[arg(long)]
    pub verify: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<WeightsMode, String> {
    match s {
        "none" => Ok(WeightsMode::None),
        "grid" => Ok(WeightsMode::Grid),
        "bayes" => Ok(WeightsMode::Bayes),
        "fixed" => Ok(WeightsMode::Fixed),
        _ => Err(format!("unknown weights mode `{s}` (expected none, grid, bayes or fixed)")),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| execute(&cli.command))),
        None => execute(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Prepare(a) => prepare(a),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a),
        Command::Backtest(a) => backtest_cmd(a),
        Command::Optimize(a) => optimize(a),
        Command::SweepWindow(a) => sweep_window(a),
        Command::SelectFeatures(a) => select_features(a),
        Command::Report(a) => report(a),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut out = Outputs::new(&a.out)?;
    let mut config = match &a.config {
        Some(path) => {
            out.input(path)?;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<GeneratorConfig>(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => GeneratorConfig::example(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let dataset = generate_portfolio(&config)?;
    let mut csv = Vec::new();
    write_csv(&dataset, &mut csv)?;
    out.write(SNAPSHOTS_NAME, csv)?;
    out.write("generator.json", serde_json::to_string_pretty(&config)? + "\n")?;
    println!("wrote {} snapshots to {}", dataset.snapshots.len(), a.out.join(SNAPSHOTS_NAME).display());
    out.finish("synth", &config)?;
    Ok(())
}

fn in_dir_or_file(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    let input = in_dir_or_file(&a.input, SNAPSHOTS_NAME);
    let out_dir = match &a.out {
        Some(d) => d.clone(),
        None => input.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    let mut out = Outputs::new(&out_dir)?;
    out.input(&input)?;
    let file = fs::File::open(&input).map_err(|e| Error::io(&input, e))?;
    let dataset = read_csv(std::io::BufReader::new(file))?;
    let labeling = derive_labels(&dataset)?;
    let segments = labeling.by_segment();
    let labeled_path = out_dir.join(LABELED_NAME);
    write_labeled(&labeled_path, &segments)?;
    out.artifacts.push(PathBuf::from(LABELED_NAME));
    let table = class_count_table(&segments);
    out.write("class_counts.csv", &table)?;
    print!("{table}");
    println!(
        "{} labeled examples; {} in-flight opportunities kept out of training; {} post-close snapshots dropped",
        labeling.examples.len(),
        labeling.in_flight_opportunities(),
        labeling.discarded_after_close
    );
    out.finish("prepare", &serde_json::json!({ "input": input }))?;
    Ok(())
}

/// Loaded state shared by the modeling subcommands.
struct Session {
    config: RunConfig,
    segments: Vec<LabeledDataset>,
    out: Outputs,
}

fn open_session(c: &CommonArgs) -> Result<Session> {
    let mut config = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if c.labeled.is_some() {
        config.dataset = c.labeled.clone();
    }
    if !c.segments.is_empty() {
        config.segments = Some(c.segments.clone());
    }
    if c.schema.is_some() {
        config.schema = c.schema.clone();
    }
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    if c.out.is_some() {
        config.output = c.out.clone();
    }
    let dataset = config
        .dataset
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no labeled dataset: pass --labeled or set `dataset`".into()))?;
    let labeled_path = in_dir_or_file(&dataset, LABELED_NAME);
    let output = config
        .output
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no output directory: pass --out or set `output`".into()))?;
    let mut all = read_labeled(&labeled_path)?;
    let segments = match &config.segments {
        None => all.into_values().collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                let key = SegmentKey::parse(n)?;
                all.remove(&key)
                    .ok_or_else(|| Error::invalid(format!("segment {key} is not in {}", labeled_path.display())))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let mut out = Outputs::new(&output)?;
    out.input(&labeled_path)?;
    if let Some(path) = &config.schema {
        out.input(path)?;
    }
    Ok(Session {
        config,
        segments,
        out,
    })
}

fn only_segment(s: &Session) -> Result<&LabeledDataset> {
    match s.segments.as_slice() {
        [one] => Ok(one),
        _ => Err(Error::invalid(format!(
            "this command works on one segment; {} selected (use --segment BU/GEO)",
            s.segments.len()
        ))),
    }
}

fn rows_until(data: &LabeledDataset, until: Option<Quarter>) -> Result<Vec<usize>> {
    let rows: Vec<usize> = match until {
        None => (0..data.len()).collect(),
        Some(q) => (0..data.len())
            .filter(|&i| crate::labeling::quarter_of(data.examples[i].snapshot.record_date) <= q)
            .collect(),
    };
    if rows.is_empty() {
        return Err(Error::invalid(format!("segment {} has no rows to fit on", data.segment)));
    }
    Ok(rows)
}

fn file_stem(key: &SegmentKey) -> String {
    format!("{}_{}", key.business_unit, key.geography)
}

fn featurize(a: &ModelArgs) -> Result<()> {
    let mut s = open_session(&a.common)?;
    let data = only_segment(&s)?.clone();
    let config = s.config.backtest_config(WeightsMode::None)?;
    let rows = rows_until(&data, a.train_until)?;
    let (featurizer, _) = Featurizer::fit(&config.features, &data, &rows, crate::seed::derive(config.seed, "cli/featurize"))?;
    let all: Vec<usize> = (0..data.len()).collect();
    let matrix = featurizer.transform(&data, &all)?;
    s.out.write("features.bin", matrix.to_cache_bytes()?)?;
    s.out.write("feature_schema.json", serde_json::to_string_pretty(&featurizer.schema)? + "\n")?;
    println!("{}: {} rows x {} features ({} fitting rows)", data.segment, matrix.n_rows, matrix.n_cols(), rows.len());
    s.out.finish("featurize", &s.config)?;
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut s = open_session(&a.model.common)?;
    let data = only_segment(&s)?.clone();
    let weights = match &a.weights {
        Some(path) => {
            s.out.input(path)?;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(ClassWeights::from_json(&text)?)
        }
        None => s.config.fixed_weights,
    };
    let config = s.config.backtest_config(WeightsMode::None)?;
    let rows = rows_until(&data, a.model.train_until)?;
    let trained = backtest::train_on_rows(&data, &rows, weights.as_ref(), &config, crate::seed::derive(config.seed, "cli/train"))?;
    let stem = file_stem(&data.segment);
    s.out.write(&format!("{stem}.model"), trained.model.to_bytes())?;
    s.out.write(&format!("{stem}.model.txt"), dump_text(&trained.model))?;
    let mut imp = String::from("feature,splits\n");
    for f in feature_importance(&trained.model) {
        imp.push_str(&format!("{},{}\n", f.feature, f.splits));
    }
    s.out.write(&format!("{stem}_importance.csv"), imp)?;
    println!("{}: trained on {} rows, model {}", data.segment, rows.len(), trained.model.hash());
    s.out.finish("train", &s.config)?;
    Ok(())
}

fn backtest_cmd(a: &BacktestArgs) -> Result<()> {
    let mut s = open_session(&a.common)?;
    if let Some(tw) = a.train_window {
        s.config.train_window = tw;
    }
    if let Some(tw) = a.test_window {
        s.config.test_window = tw;
    }
    let modes = if a.modes.is_empty() { vec![s.config.mode] } else { a.modes.clone() };
    let mut reports = Vec::new();
    for data in &s.segments {
        let plan = build_fold_plan(&data.quarters(), s.config.train_window, s.config.test_window)
            .map_err(|e| Error::invalid(format!("segment {}: {e}", data.segment)))?;
        for &mode in &modes {
            let config = s.config.backtest_config(mode)?;
            let (report, models) = run_backtest_with_models(data, &plan, &config)?;
            for (fold, model) in report.folds.iter().zip(&models) {
                if let Some(m) = model {
                    let name = format!("models/{}_{}_fold{}.model", file_stem(&data.segment), mode.name(), fold.fold.index);
                    s.out.write(&name, m.to_bytes())?;
                }
                if let Some(reason) = &fold.skipped {
                    eprintln!("warning: {} {} fold {} skipped: {reason}", data.segment, mode.name(), fold.fold.index);
                }
            }
            println!(
                "{} {}: {} folds, avg accuracy {}, avg F1 {}",
                data.segment,
                mode.name(),
                report.averages.folds,
                format_fixed(report.averages.accuracy, DECIMALS),
                format_fixed(report.averages.f1, DECIMALS)
            );
            reports.push(report);
        }
    }
    let set = ReportSet { reports };
    let paths = emit_report(&set, &s.out.dir)?;
    for p in paths {
        s.out.artifacts.push(PathBuf::from(p.file_name().expect("report file name")));
    }
    let config = s.config.clone();
    s.out.finish("backtest", &serde_json::json!({ "run": config, "modes": modes }))?;
    Ok(())
}

fn optimize(a: &OptimizeArgs) -> Result<()> {
    let mut s = open_session(&a.model.common)?;
    let data = only_segment(&s)?.clone();
    let config = s.config.backtest_config(a.method)?;
    let quarters = data.quarters();
    let first = *quarters.first().ok_or_else(|| Error::invalid("segment has no quarters"))?;
    let last = a.model.train_until.unwrap_or(*quarters.last().expect("non-empty"));
    let span = QuarterSpan { first, last };
    let (result, summary) = search_weights(&data, &span, &config, 0)?;
    s.out.write("weights.json", result.best.to_json() + "\n")?;
    s.out.write("trace.csv", result.trace_csv())?;
    s.out.write("search.json", serde_json::to_string_pretty(&result)? + "\n")?;
    println!(
        "{}: best objective {} after {} evaluations (validated on {}), raw weights {:?}",
        data.segment,
        format_fixed(summary.best_objective, DECIMALS),
        summary.budget_used,
        summary.validation_quarter,
        result.best.raw()
    );
    s.out.finish("optimize", &s.config)?;
    Ok(())
}

fn averages_cells(a: Option<&backtest::Averages>) -> Vec<String> {
    let f = |v: Option<f64>| v.map(|x| format_fixed(x, DECIMALS)).unwrap_or_default();
    match a {
        None => vec![String::new(); 9],
        Some(a) => {
            let mut v = vec![f(Some(a.accuracy)), f(Some(a.precision)), f(Some(a.recall)), f(Some(a.f1)), f(a.auc)];
            v.extend(a.class_auc.iter().map(|x| f(*x)));
            v
        }
    }
}

const AVG_COLUMNS: [&str; 9] = [
    "avg_accuracy",
    "avg_precision",
    "avg_recall",
    "avg_f1",
    "avg_auc",
    "class0_auc",
    "class1_auc",
    "class2_auc",
    "class3_auc",
];

fn csv_string(header: Vec<&str>, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn sweep_window(a: &SweepWindowArgs) -> Result<()> {
    let mut s = open_session(&a.common)?;
    let config = s.config.backtest_config(a.mode.unwrap_or(s.config.mode))?;
    let sizes: Vec<usize> = if a.sizes.is_empty() { SWEEP_SIZES.collect() } else { a.sizes.clone() };
    let test_window = a.test_window.unwrap_or(s.config.test_window);
    let mut all = BTreeMap::new();
    let mut rows = Vec::new();
    for data in &s.segments {
        let table = window_sweep(data, &sizes, test_window, &config)?;
        for r in &table {
            let mut row = vec![data.segment.to_string(), r.train_window.to_string(), r.folds.to_string()];
            row.extend(averages_cells(r.averages.as_ref()));
            row.push(r.skipped.clone().unwrap_or_default());
            rows.push(row);
        }
        all.insert(data.segment.to_string(), table);
    }
    let mut header = vec!["segment", "train_window", "folds"];
    header.extend(AVG_COLUMNS);
    header.push("skipped");
    s.out.write("window_sweep.csv", csv_string(header, rows)?)?;
    s.out.write("window_sweep.json", serde_json::to_string_pretty(&all)? + "\n")?;
    println!("window sweep over sizes {sizes:?} written to {}", s.out.dir.display());
    s.out.finish("sweep-window", &s.config)?;
    Ok(())
}

fn select_features(a: &SelectArgs) -> Result<()> {
    let mut s = open_session(&a.common)?;
    let config = s.config.backtest_config(a.mode.unwrap_or(s.config.mode))?;
    let thresholds: Vec<u64> = if a.thresholds.is_empty() { DEFAULT_THRESHOLDS.to_vec() } else { a.thresholds.clone() };
    let mut all = BTreeMap::new();
    let mut rows = Vec::new();
    for data in &s.segments {
        let plan = build_fold_plan(&data.quarters(), s.config.train_window, s.config.test_window)?;
        let table = feature_selection_sweep(data, &plan, &thresholds, &config)?;
        for r in &table {
            let mut row = vec![
                data.segment.to_string(),
                r.threshold.to_string(),
                format_fixed(r.removed_pct, 2),
                r.remaining.to_string(),
            ];
            row.extend(averages_cells(Some(&r.averages)));
            rows.push(row);
        }
        all.insert(data.segment.to_string(), table);
    }
    let mut header = vec!["segment", "threshold", "removed_pct", "remaining"];
    header.extend(AVG_COLUMNS);
    s.out.write("feature_selection.csv", csv_string(header, rows)?)?;
    s.out.write("feature_selection.json", serde_json::to_string_pretty(&all)? + "\n")?;
    println!("feature selection over thresholds {thresholds:?} written to {}", s.out.dir.display());
    s.out.finish("select-features", &s.config)?;
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    if let Some(manifest) = &a.verify {
        let n = RunManifest::verify(manifest)?;
        println!("{}: {n} artifacts verified", manifest.display());
    }
    if let Some(input) = &a.input {
        let set = ReportSet::read(input)?;
        let dir = match &a.out {
            Some(d) => d.clone(),
            None => input.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
        };
        let mut out = Outputs::new(&dir)?;
        out.input(input)?;
        let paths = emit_report(&set, &dir)?;
        for p in paths {
            out.artifacts.push(PathBuf::from(p.file_name().expect("report file name")));
        }
        print!("{}", crate::report::to_csv(&set.reports)?);
        out.finish("report", &serde_json::json!({ "input": input }))?;
    }
    Ok(())
}
