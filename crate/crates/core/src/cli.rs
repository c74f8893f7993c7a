//! The `augtool` command line.
//!
//! ```text
//! augtool subsample --config c.json --n 10 --seed 7 --out run/
//! augtool augment   --config c.json --input run/train_sub.tsv --method mock --out run/
//! augtool eval      --config c.json --mode intrinsic --synthetic run/synthetic.tsv --out run/
//! augtool eval      --config c.json --mode extrinsic --trials 15 --out run/
//! augtool report    run/report.json other/report.json --out table.txt
//! ```
//!
//! Settings resolve as flag > config file > default. `AUGTOOL_BACKEND_CMD`
//! overrides the config's `backend.backend_cmd`. Exit codes: 0 success,
//! 2 configuration or corpus error, 3 backend or augmentation error,
//! 4 metric or experiment error.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentError};
use crate::backends::{self, BackendConfig, BackendError, BackendResources, Method, SynonymLexicon};
use crate::corpus::{self, CorpusError, DatasetSplit, SplitKind, TaskSpec};
use crate::experiment::{self, ConfigBackendFactory, ExperimentConfig, ExperimentData, ExperimentError, ExperimentReport};
use crate::metrics::{self, ClassifierConfig, DiversityReport, FidelityReport, MetricError};

pub const BACKEND_CMD_ENV: &str = "AUGTOOL_BACKEND_CMD";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CORPUS: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_METRIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Corpus(_) => EXIT_CORPUS,
            CliError::Backend(_) | CliError::Augment(_) => EXIT_BACKEND,
            CliError::Metric(_) | CliError::Experiment(_) => EXIT_METRIC,
            CliError::Io { .. } => EXIT_CORPUS,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "augtool", version, about = "Label-conditioned text data augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a stratified low-resource train/dev subsample.
    Subsample {
        #[arg(long)]
        config: PathBuf,
        /// Training examples per class.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dev_per_class: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate synthetic examples for a training split.
    Augment {
        #[arg(long)]
        config: PathBuf,
        /// Split to augment; defaults to the config's train file.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dev split for fine-tuning; defaults to the config's dev file.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        backend_cmd: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Intrinsic metrics of a synthetic set, or the repeated-trial protocol.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Synthetic TSV (intrinsic mode).
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        backend_cmd: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render report.json files as a method-by-dataset table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Intrinsic,
    Extrinsic,
}

/// Paths of the full (un-subsampled) dataset splits.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

fn default_n() -> usize {
    10
}
fn default_dev() -> usize {
    10
}
fn default_trials() -> usize {
    15
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    #[serde(default = "default_n")]
    pub n_per_class: usize,
    #[serde(default = "default_dev")]
    pub dev_per_class: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_one")]
    pub s: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub include_no_aug_baseline: bool,
    #[serde(default = "default_one")]
    pub workers: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

fn default_backend() -> BackendConfig {
    BackendConfig::for_method(Method::Mock)
}

/// The JSON config file shared by all subcommands. Relative paths resolve
/// against the config file's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub task: TaskSpec,
    pub data: DataPaths,
    #[serde(default = "default_backend")]
    pub backend: BackendConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub experiment: ExperimentSettings,
    /// Synonym lexicon for EDA, JSON `{"word": ["synonym", ...]}`.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ToolConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.train);
        cfg.data.dev.as_mut().map(resolve);
        cfg.data.test.as_mut().map(resolve);
        cfg.lexicon.as_mut().map(resolve);
        Ok(cfg)
    }

    /// Backend config after `--method`, the environment and `--backend-cmd`.
    fn backend_for(&self, method: Option<&str>, backend_cmd: Option<&str>) -> Result<BackendConfig, CliError> {
        let mut cfg = match method {
            Some(m) => {
                let m: Method = m.parse()?;
                if m == self.backend.method {
                    self.backend.clone()
                } else {
                    BackendConfig {
                        backend_cmd: self.backend.backend_cmd.clone(),
                        ..BackendConfig::for_method(m)
                    }
                }
            }
            None => self.backend.clone(),
        };
        if let Ok(cmd) = std::env::var(BACKEND_CMD_ENV) {
            if !cmd.trim().is_empty() {
                cfg.backend_cmd = Some(cmd);
            }
        }
        if let Some(cmd) = backend_cmd {
            cfg.backend_cmd = Some(cmd.to_string());
        }
        Ok(cfg)
    }

    fn resources(&self) -> Result<BackendResources, CliError> {
        let lexicon = match &self.lexicon {
            Some(p) => Some(Arc::new(SynonymLexicon::load(p)?)),
            None => None,
        };
        Ok(BackendResources {
            lexicon,
            translators: None,
        })
    }

    fn load_split(&self, path: &Path, kind: SplitKind) -> Result<DatasetSplit, CliError> {
        Ok(corpus::load_tsv(path, &self.task)?.with_kind(kind))
    }
}

/// Written next to every command's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub created_at: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub files: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_manifest(
    command: &str,
    config_path: &Path,
    out: &Path,
    master_seed: u64,
    files: &[&str],
) -> Result<(), CliError> {
    let mut files: Vec<String> = files.iter().map(|f| f.to_string()).collect();
    files.push(MANIFEST_FILE.into());
    let manifest = RunManifest {
        command: command.into(),
        config_path: config_path.to_path_buf(),
        output_dir: out.to_path_buf(),
        created_at: chrono::Utc::now().to_rfc3339(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        master_seed,
        files,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| io_err(path)(std::io::Error::other(e)))?;
    use std::io::Write;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CORPUS } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("augtool: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Subsample {
            config,
            n,
            dev_per_class,
            seed,
            out,
        } => cmd_subsample(&config, n, dev_per_class, seed, &out),
        Command::Augment {
            config,
            input,
            dev,
            method,
            s,
            seed,
            workers,
            backend_cmd,
            out,
        } => cmd_augment(AugmentArgs {
            config,
            input,
            dev,
            method,
            s,
            seed,
            workers,
            backend_cmd,
            out,
        }),
        Command::Eval {
            config,
            mode,
            synthetic,
            method,
            n,
            trials,
            seed,
            workers,
            backend_cmd,
            out,
        } => {
            let cfg = ToolConfig::load(&config)?;
            match mode {
                EvalMode::Intrinsic => {
                    let synthetic = synthetic.ok_or_else(|| {
                        CliError::Config("--mode intrinsic requires --synthetic".into())
                    })?;
                    cmd_eval_intrinsic(&config, &cfg, &synthetic, &out)
                }
                EvalMode::Extrinsic => cmd_eval_extrinsic(
                    &config,
                    &cfg,
                    ExtrinsicArgs {
                        method,
                        n,
                        trials,
                        seed,
                        workers,
                        backend_cmd,
                    },
                    &out,
                ),
            }
        }
        Command::Report { inputs, out } => cmd_report(&inputs, out.as_deref()),
    }
}

pub const TRAIN_SUB_FILE: &str = "train_sub.tsv";
pub const DEV_SUB_FILE: &str = "dev_sub.tsv";
pub const SYNTHETIC_FILE: &str = "synthetic.tsv";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.txt";

fn cmd_subsample(
    config_path: &Path,
    n: Option<usize>,
    dev_per_class: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = ToolConfig::load(config_path)?;
    let n = n.unwrap_or(cfg.experiment.n_per_class);
    let dev = dev_per_class.unwrap_or(cfg.experiment.dev_per_class);
    let seed = seed.unwrap_or(cfg.experiment.master_seed);
    let train = cfg.load_split(&cfg.data.train, SplitKind::Train)?;
    let (train_sub, dev_sub) = corpus::subsample_low_resource(&train, n, dev, seed)?;
    ensure_dir(out)?;
    corpus::save_tsv(&train_sub, out.join(TRAIN_SUB_FILE))?;
    corpus::save_tsv(&dev_sub, out.join(DEV_SUB_FILE))?;
    write_manifest("subsample", config_path, out, seed, &[TRAIN_SUB_FILE, DEV_SUB_FILE])
}

struct AugmentArgs {
    config: PathBuf,
    input: Option<PathBuf>,
    dev: Option<PathBuf>,
    method: Option<String>,
    s: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    backend_cmd: Option<String>,
    out: PathBuf,
}

fn cmd_augment(args: AugmentArgs) -> Result<(), CliError> {
    let cfg = ToolConfig::load(&args.config)?;
    let backend_cfg = cfg.backend_for(args.method.as_deref(), args.backend_cmd.as_deref())?;
    let s = args.s.unwrap_or(cfg.experiment.s);
    let seed = args.seed.unwrap_or(cfg.experiment.master_seed);
    let workers = args.workers.unwrap_or(cfg.experiment.workers).max(1);

    let input = args.input.clone().unwrap_or_else(|| cfg.data.train.clone());
    let train = cfg.load_split(&input, SplitKind::Train)?;
    let dev = match args.dev.as_ref().or(cfg.data.dev.as_ref()) {
        Some(p) => cfg.load_split(p, SplitKind::Dev)?,
        None => {
            log::warn!("no dev split given; fine-tuning selects on the input split");
            train.clone().with_kind(SplitKind::Dev)
        }
    };

    let backend = backends::build_backend(&backend_cfg, &cfg.task, &cfg.resources()?)?;
    let mut tuned = backends::fine_tune(backend, &train, &dev)?;
    let run = if workers > 1 {
        let mut handles = Vec::with_capacity(workers);
        for _ in 1..workers {
            match tuned.try_clone() {
                Some(h) => handles.push(h),
                None => break,
            }
        }
        if handles.len() + 1 < workers {
            log::warn!("{} handles cannot be cloned; generating serially", backend_cfg.method);
        }
        handles.insert(0, tuned);
        augment::run_augmentation_parallel(&mut handles, &train, s, seed)?
    } else {
        augment::run_augmentation(tuned.as_mut(), &train, s, seed)?
    };

    ensure_dir(&args.out)?;
    corpus::save_tsv(&run.synthetic, args.out.join(SYNTHETIC_FILE))?;
    let records_path = args.out.join(RECORDS_FILE);
    let file = fs::File::create(&records_path).map_err(io_err(&records_path))?;
    augment::write_records_jsonl(&run.records, BufWriter::new(file)).map_err(io_err(&records_path))?;
    write_manifest("augment", &args.config, &args.out, seed, &[SYNTHETIC_FILE, RECORDS_FILE])
}

/// `report.json` of `eval --mode intrinsic`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntrinsicReport {
    pub dataset: String,
    pub synthetic: PathBuf,
    pub n: usize,
    pub diversity: Vec<DiversityReport>,
    pub fidelity: Option<FidelityReport>,
}

fn cmd_eval_intrinsic(
    config_path: &Path,
    cfg: &ToolConfig,
    synthetic_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let synthetic = cfg.load_split(synthetic_path, SplitKind::Synthetic)?;
    let texts = synthetic.texts();
    let diversity = experiment::DIVERSITY_ORDERS
        .iter()
        .map(|&n| metrics::type_token_ratio(&texts, n))
        .collect::<Result<Vec<_>, _>>()?;
    let fidelity = match (&cfg.data.dev, &cfg.data.test) {
        (Some(dev), Some(test)) => {
            let train = cfg.load_split(&cfg.data.train, SplitKind::Train)?;
            let test = cfg.load_split(test, SplitKind::Test)?;
            let dev = cfg.load_split(dev, SplitKind::Dev)?;
            let oracle = metrics::train_fidelity_oracle(&train, &test, &dev, &cfg.classifier)?;
            Some(metrics::semantic_fidelity(&synthetic, oracle.as_ref())?)
        }
        _ => {
            log::warn!("config lacks dev or test data; skipping semantic fidelity");
            None
        }
    };
    let report = IntrinsicReport {
        dataset: cfg.task.name().into(),
        synthetic: synthetic_path.to_path_buf(),
        n: synthetic.len(),
        diversity,
        fidelity,
    };
    let mut table = String::from("metric | value\n-------+------\n");
    for d in &report.diversity {
        table.push_str(&format!("ttr_{} | {:.4}\n", d.n, d.ttr));
    }
    if let Some(f) = &report.fidelity {
        table.push_str(&format!("fidelity | {:.2}\n", f.accuracy * 100.0));
    }
    ensure_dir(out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write_text(&out.join(TABLE_FILE), &table)?;
    print!("{table}");
    write_manifest("eval", config_path, out, cfg.experiment.master_seed, &[REPORT_FILE, TABLE_FILE])
}

struct ExtrinsicArgs {
    method: Option<String>,
    n: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    backend_cmd: Option<String>,
}

fn cmd_eval_extrinsic(
    config_path: &Path,
    cfg: &ToolConfig,
    args: ExtrinsicArgs,
    out: &Path,
) -> Result<(), CliError> {
    let test_path = cfg
        .data
        .test
        .as_ref()
        .ok_or_else(|| CliError::Config("extrinsic evaluation requires data.test".into()))?;
    let settings = &cfg.experiment;
    let exp = ExperimentConfig {
        method: cfg.backend_for(args.method.as_deref(), args.backend_cmd.as_deref())?,
        n_per_class: args.n.unwrap_or(settings.n_per_class),
        dev_per_class: settings.dev_per_class,
        trials: args.trials.unwrap_or(settings.trials),
        s: settings.s,
        master_seed: args.seed.unwrap_or(settings.master_seed),
        classifier: cfg.classifier.clone(),
        include_no_aug_baseline: settings.include_no_aug_baseline,
        workers: args.workers.unwrap_or(settings.workers),
    };
    let data = ExperimentData {
        train: cfg.load_split(&cfg.data.train, SplitKind::Train)?,
        test: cfg.load_split(test_path, SplitKind::Test)?,
    };
    let oracle = match &cfg.data.dev {
        Some(dev) => {
            let dev = cfg.load_split(dev, SplitKind::Dev)?;
            Some(metrics::train_fidelity_oracle(&data.train, &data.test, &dev, &cfg.classifier)?)
        }
        None => None,
    };
    let factory = ConfigBackendFactory {
        resources: cfg.resources()?,
    };
    let report = experiment::run_experiment(&exp, &data, &factory, oracle.as_deref())?;
    let table = experiment::format_report(std::slice::from_ref(&report));
    ensure_dir(out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write_text(&out.join(TABLE_FILE), &table)?;
    print!("{table}");
    write_manifest("eval", config_path, out, exp.master_seed, &[REPORT_FILE, TABLE_FILE])
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReportFile {
    One(Box<ExperimentReport>),
    Many(Vec<ExperimentReport>),
}

fn cmd_report(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in inputs {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let parsed: ReportFile = serde_json::from_reader(BufReader::new(file)).map_err(|e| {
            CliError::Metric(MetricError::InvalidArgument(format!("{}: {e}", path.display())))
        })?;
        match parsed {
            ReportFile::One(r) => reports.push(*r),
            ReportFile::Many(rs) => reports.extend(rs),
        }
    }
    if reports.is_empty() {
        return Err(CliError::Metric(MetricError::InvalidArgument("no reports given".into())));
    }
    let table = experiment::format_report(&reports);
    print!("{table}");
    if let Some(path) = out {
        write_text(path, &table)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_defaults() {
        let s = ExperimentSettings::default();
        assert_eq!((s.n_per_class, s.dev_per_class, s.trials, s.s, s.workers), (10, 10, 15, 1, 1));
        assert!(s.include_no_aug_baseline);
    }

    #[test]
    fn cli_parses() {
        Cli::try_parse_from(["augtool", "subsample", "--config", "c.json", "--n", "10", "--seed", "7"]).unwrap();
        Cli::try_parse_from(["augtool", "eval", "--config", "c.json", "--mode", "extrinsic", "--trials", "15"]).unwrap();
        assert!(Cli::try_parse_from(["augtool", "eval", "--config", "c.json", "--mode", "bogus"]).is_err());
    }
}
