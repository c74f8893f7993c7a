//! Repeated seeded trials of subsample, fine-tune, augment, classify and
//! test, aggregated into mean and sample standard deviation.

use std::collections::BTreeMap;
use std::fmt;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentationRun};
use crate::backends::{self, BackendConfig, BackendError, BackendResources, Generator};
use crate::corpus::{self, DatasetSplit, TaskSpec};
use crate::metrics::{self, Classifier, ClassifierConfig, DiversityReport, FidelityReport};
use crate::seed;

/// N-gram orders reported for diversity.
pub const DIVERSITY_ORDERS: [usize; 2] = [1, 3];

/// Trials may fail up to this share before the whole experiment does.
pub const MAX_FAILED_TRIAL_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStage {
    Subsample,
    Backend,
    FineTune,
    Augment,
    Classifier,
    Evaluate,
}

impl fmt::Display for TrialStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// Why one trial stopped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub stage: TrialStage,
    pub message: String,
}

impl fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trial {} failed at {}: {}", self.trial, self.stage, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Trial(TrialFailure),
    #[error("{failed} of {trials} trials failed: {}", .diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    TooManyFailures {
        failed: usize,
        trials: usize,
        diagnostics: Vec<TrialFailure>,
    },
    #[error("invalid experiment configuration: {0}")]
    Config(String),
}

fn default_dev_per_class() -> usize {
    10
}
fn default_trials() -> usize {
    15
}
fn default_s() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_workers() -> usize {
    1
}

/// One cell of the evaluation grid: a dataset, a method and a per-class
/// budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: BackendConfig,
    pub n_per_class: usize,
    #[serde(default = "default_dev_per_class")]
    pub dev_per_class: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default = "default_true")]
    pub include_no_aug_baseline: bool,
    /// Trials executed concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(method: BackendConfig, n_per_class: usize) -> Self {
        Self {
            method,
            n_per_class,
            dev_per_class: default_dev_per_class(),
            trials: default_trials(),
            s: default_s(),
            master_seed: 0,
            classifier: ClassifierConfig::default(),
            include_no_aug_baseline: true,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.n_per_class == 0 || self.dev_per_class == 0 {
            return bad("n_per_class and dev_per_class must be positive");
        }
        if self.s == 0 {
            return bad("s must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        Ok(())
    }
}

/// Full training pool and the test split all trials are scored on.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub train: DatasetSplit,
    pub test: DatasetSplit,
}

/// Creates a fresh backend for every trial.
pub trait BackendFactory: Sync {
    fn create(
        &self,
        config: &BackendConfig,
        task: &TaskSpec,
    ) -> Result<Box<dyn Generator>, BackendError>;
}

impl<F> BackendFactory for F
where
    F: Fn(&BackendConfig, &TaskSpec) -> Result<Box<dyn Generator>, BackendError> + Sync,
{
    fn create(
        &self,
        config: &BackendConfig,
        task: &TaskSpec,
    ) -> Result<Box<dyn Generator>, BackendError> {
        self(config, task)
    }
}

/// Factory over [`backends::build_backend`].
#[derive(Clone, Default)]
pub struct ConfigBackendFactory {
    pub resources: BackendResources,
}

impl BackendFactory for ConfigBackendFactory {
    fn create(
        &self,
        config: &BackendConfig,
        task: &TaskSpec,
    ) -> Result<Box<dyn Generator>, BackendError> {
        backends::build_backend(config, task, &self.resources)
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub no_aug_accuracy: Option<f64>,
    pub train_sub: DatasetSplit,
    pub dev_sub: DatasetSplit,
    pub augmentation: AugmentationRun,
}

pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    seed::mix(master_seed, &[trial as u64])
}

/// Runs one trial end to end. Subsampling, augmentation and classifier
/// initialization all derive from the trial seed.
pub fn run_trial(
    config: &ExperimentConfig,
    data: &ExperimentData,
    factory: &dyn BackendFactory,
    trial: usize,
) -> Result<TrialResult, TrialFailure> {
    let fail = |stage: TrialStage| {
        move |e: &dyn fmt::Display| TrialFailure {
            trial,
            stage,
            message: e.to_string(),
        }
    };
    let seed = trial_seed(config.master_seed, trial);
    let (train_sub, dev_sub) =
        corpus::subsample_low_resource(&data.train, config.n_per_class, config.dev_per_class, seed)
            .map_err(|e| fail(TrialStage::Subsample)(&e))?;
    let backend = factory
        .create(&config.method, data.train.task())
        .map_err(|e| fail(TrialStage::Backend)(&e))?;
    let mut tuned = backends::fine_tune(backend, &train_sub, &dev_sub)
        .map_err(|e| fail(TrialStage::FineTune)(&e))?;
    let augmentation = augment::run_augmentation(
        tuned.as_mut(),
        &train_sub,
        config.s,
        seed::mix(seed, &[1]),
    )
    .map_err(|e| fail(TrialStage::Augment)(&e))?;
    drop(tuned);
    let merged = augment::merge_for_training(&train_sub, &augmentation.synthetic)
        .map_err(|e| fail(TrialStage::Augment)(&e))?;

    let clf_config = config.classifier.clone().with_seed(seed);
    let score = |train: &DatasetSplit| -> Result<f64, TrialFailure> {
        let clf = metrics::train_classifier(train, &dev_sub, &clf_config)
            .map_err(|e| fail(TrialStage::Classifier)(&e))?;
        metrics::accuracy(clf.as_ref(), &data.test).map_err(|e| fail(TrialStage::Evaluate)(&e))
    };
    let accuracy = score(&merged)?;
    let no_aug_accuracy = if config.include_no_aug_baseline {
        Some(score(&train_sub)?)
    } else {
        None
    };
    Ok(TrialResult {
        trial,
        seed,
        accuracy,
        no_aug_accuracy,
        train_sub,
        dev_sub,
        augmentation,
    })
}

/// Arithmetic mean and sample standard deviation (divisor `len - 1`; zero
/// for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Accuracy summary of the classifier trained without synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub per_trial_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub method: String,
    pub n_per_class: usize,
    pub per_trial_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub fidelity: Option<FidelityReport>,
    pub diversity: Vec<DiversityReport>,
    /// Share of successful generations that emitted their assigned label.
    pub label_match_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_aug: Option<BaselineSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_trials: Vec<TrialFailure>,
}

impl ExperimentReport {
    /// Recomputes mean and std from the stored per-trial accuracies.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let (m, s) = mean_std(&self.per_trial_accuracy);
        (m - self.mean).abs() <= tol && (s - self.std).abs() <= tol
    }
}

/// Executes every trial, up to `config.workers` at a time, and aggregates by
/// trial index. Intrinsic metrics come from the first successful trial
/// (trial 0 unless it failed); fidelity needs an `oracle`.
pub fn run_experiment(
    config: &ExperimentConfig,
    data: &ExperimentData,
    factory: &dyn BackendFactory,
    oracle: Option<&dyn Classifier>,
) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let outcomes = run_trials(config, data, factory);

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => ok.push(r),
            Err(f) => {
                log::warn!("{f}");
                failures.push(f)
            }
        }
    }
    if failures.len() as f64 > MAX_FAILED_TRIAL_FRACTION * config.trials as f64 || ok.is_empty() {
        return Err(ExperimentError::TooManyFailures {
            failed: failures.len(),
            trials: config.trials,
            diagnostics: failures,
        });
    }

    let per_trial_accuracy: Vec<f64> = ok.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&per_trial_accuracy);
    let no_aug = config.include_no_aug_baseline.then(|| {
        let acc: Vec<f64> = ok.iter().filter_map(|r| r.no_aug_accuracy).collect();
        let (mean, std) = mean_std(&acc);
        BaselineSummary {
            per_trial_accuracy: acc,
            mean,
            std,
        }
    });

    let first = &ok[0].augmentation.synthetic;
    let texts = first.texts();
    let diversity = DIVERSITY_ORDERS
        .iter()
        .filter_map(|&n| match metrics::type_token_ratio(&texts, n) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("skipping {n}-gram diversity: {e}");
                None
            }
        })
        .collect();
    let fidelity = match oracle {
        Some(oracle) => Some(metrics::semantic_fidelity(first, oracle).map_err(|e| {
            ExperimentError::Trial(TrialFailure {
                trial: ok[0].trial,
                stage: TrialStage::Evaluate,
                message: e.to_string(),
            })
        })?),
        None => None,
    };
    let records: Vec<_> = ok
        .iter()
        .flat_map(|r| r.augmentation.records.iter().cloned())
        .collect();

    Ok(ExperimentReport {
        dataset: data.train.task().name().to_string(),
        method: config.method.method.as_str().to_string(),
        n_per_class: config.n_per_class,
        per_trial_accuracy,
        mean,
        std,
        fidelity,
        diversity,
        label_match_rate: augment::label_match_rate(&records),
        no_aug,
        failed_trials: failures,
    })
}

/// All trial outcomes in trial order, independent of `workers`.
pub fn run_trials(
    config: &ExperimentConfig,
    data: &ExperimentData,
    factory: &dyn BackendFactory,
) -> Vec<Result<TrialResult, TrialFailure>> {
    let workers = config.workers.clamp(1, config.trials.max(1));
    if workers == 1 {
        return (0..config.trials)
            .map(|t| run_trial(config, data, factory, t))
            .collect();
    }
    let mut slots: Vec<Option<Result<TrialResult, TrialFailure>>> =
        (0..config.trials).map(|_| None).collect();
    thread::scope(|scope| {
        let jobs: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..config.trials)
                        .step_by(workers)
                        .map(|t| (t, run_trial(config, data, factory, t)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for job in jobs {
            for (t, out) in job.join().expect("trial worker panicked") {
                slots[t] = Some(out);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every trial assigned"))
        .collect()
}

/// `"MM.MM (SS.SS)"` in percent.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{:.2} ({:.2})", mean * 100.0, std * 100.0)
}

/// Methods as rows, datasets as columns; a `no_aug` row is added when any
/// report carries a baseline. Missing cells print as `-`.
pub fn format_report(reports: &[ExperimentReport]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut add = |rows: &mut Vec<String>, method: &str, dataset: &str, cell: String| {
        if !rows.iter().any(|r| r == method) {
            rows.push(method.to_string());
        }
        cells
            .entry((method.to_string(), dataset.to_string()))
            .or_insert(cell);
    };
    if reports.iter().any(|r| r.no_aug.is_some()) {
        rows.push("no_aug".into());
    }
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if let Some(b) = &r.no_aug {
            add(&mut rows, "no_aug", &r.dataset, format_cell(b.mean, b.std));
        }
        add(&mut rows, &r.method, &r.dataset, format_cell(r.mean, r.std));
    }

    let mut table: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    let mut header = vec!["Model".to_string()];
    header.extend(datasets.iter().map(|d| d.to_string()));
    table.push(header);
    for method in &rows {
        let mut line = vec![method.clone()];
        for d in &datasets {
            line.push(
                cells
                    .get(&(method.clone(), d.to_string()))
                    .cloned()
                    .unwrap_or_else(|| "-".into()),
            );
        }
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let render = |row: &[String]| {
        row.iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    out.push_str(&render(&table[0]));
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for row in &table[1..] {
        out.push_str(&render(row));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(dataset: &str, method: &str, mean: f64, std: f64) -> ExperimentReport {
        ExperimentReport {
            dataset: dataset.into(),
            method: method.into(),
            n_per_class: 10,
            per_trial_accuracy: vec![mean],
            mean,
            std,
            fidelity: None,
            diversity: vec![],
            label_match_rate: 1.0,
            no_aug: None,
            failed_trials: vec![],
        }
    }

    #[test]
    fn mean_std_examples() {
        let (m, s) = mean_std(&[0.5, 0.7]);
        assert!((m - 0.6).abs() < 1e-12);
        assert!((s - 0.141_421_356).abs() < 1e-6);
        assert_eq!(mean_std(&[0.3, 0.3, 0.3]).1, 0.0);
        assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.5293, 0.0501), "52.93 (5.01)");
        assert_eq!(format_cell(1.0, 0.0), "100.00 (0.00)");
    }

    #[test]
    fn single_report_table() {
        let t = format_report(&[report("sst2", "mock", 1.0, 0.0)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "Model | sst2");
        assert_eq!(lines[2], "mock  | 100.00 (0.00)");
    }

    #[test]
    fn grid_with_baseline_and_gaps() {
        let mut a = report("sst2", "s2s_span", 0.5768, 0.0706);
        a.no_aug = Some(BaselineSummary { per_trial_accuracy: vec![], mean: 0.5293, std: 0.0501 });
        let b = report("snips", "eda", 0.8578, 0.0296);
        let t = format_report(&[a, b]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Model"));
        assert!(lines[0].contains("sst2") && lines[0].contains("snips"));
        assert!(lines[2].starts_with("no_aug") && lines[2].contains("52.93 (5.01)"));
        assert!(lines[3].starts_with("s2s_span") && lines[3].contains("57.68 (7.06)"));
        assert!(lines[4].starts_with("eda") && lines[4].contains("85.78 (2.96)") && lines[4].contains('-'));
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(BackendConfig::for_method(crate::backends::Method::Mock), 10);
        assert_eq!(c.trials, 15);
        assert_eq!(c.dev_per_class, 10);
        c.trials = 0;
        assert!(c.validate().is_err());
    }
}
