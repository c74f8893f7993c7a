//! Intrinsic metrics over generated text and the classifiers they rely on.

use std::collections::{BTreeMap, HashSet};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backends::{BackendError, ExternalProcess, WireExample};
use crate::corpus::{CorpusError, DatasetSplit, LabeledExample, SplitKind, TaskSpec};
use crate::seed;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("invalid classifier configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Type-token ratio of one n-gram order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub n: usize,
    pub ttr: f64,
}

/// Lower-cased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// `(distinct, total)` n-gram counts pooled over texts. N-grams never cross
/// text boundaries.
pub fn ngram_counts<S: AsRef<str>>(texts: &[S], n: usize) -> (usize, usize) {
    let mut distinct: HashSet<Vec<String>> = HashSet::new();
    let mut total = 0;
    for text in texts {
        let tokens = tokenize(text.as_ref());
        if n == 0 || tokens.len() < n {
            continue;
        }
        for gram in tokens.windows(n) {
            total += 1;
            if !distinct.contains(gram) {
                distinct.insert(gram.to_vec());
            }
        }
    }
    (distinct.len(), total)
}

pub fn type_token_ratio<S: AsRef<str>>(texts: &[S], n: usize) -> Result<DiversityReport, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidArgument("n-gram order must be positive".into()));
    }
    let (distinct, total) = ngram_counts(texts, n);
    if total == 0 {
        return Err(MetricError::UndefinedMetric(format!(
            "no text has at least {n} words"
        )));
    }
    Ok(DiversityReport {
        n,
        ttr: distinct as f64 / total as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub accuracy: f64,
    /// Accuracy per assigned label, for labels present in the synthetic set.
    pub per_label_accuracy: BTreeMap<String, f64>,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    BowLinear,
    External,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSelection {
    #[default]
    BestDevAccuracy,
}

pub const BOW_LEARNING_RATE: f64 = 0.5;
pub const EXTERNAL_LEARNING_RATE: f64 = 4e-5;

/// Classifier training settings. `dropout` and `warmup_steps` are forwarded
/// to external classifiers; the bag-of-words model ignores them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartialClassifierConfig")]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub epochs: u32,
    pub learning_rate: f64,
    pub dropout: f64,
    pub warmup_steps: u32,
    pub selection: ClassifierSelection,
    /// Seeds example order and initialization.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_cmd: Option<String>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::bow_linear()
    }
}

impl ClassifierConfig {
    pub fn bow_linear() -> Self {
        Self {
            kind: ClassifierKind::BowLinear,
            epochs: 8,
            learning_rate: BOW_LEARNING_RATE,
            dropout: 0.1,
            warmup_steps: 100,
            selection: ClassifierSelection::BestDevAccuracy,
            seed: 0,
            backend_cmd: None,
        }
    }

    pub fn external(backend_cmd: impl Into<String>) -> Self {
        Self {
            kind: ClassifierKind::External,
            learning_rate: EXTERNAL_LEARNING_RATE,
            backend_cmd: Some(backend_cmd.into()),
            ..Self::bow_linear()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.epochs == 0 || self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(MetricError::Config(
                "epochs and learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MetricError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.kind == ClassifierKind::External && self.backend_cmd.is_none() {
            return Err(MetricError::Config("external classifier requires backend_cmd".into()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialClassifierConfig {
    #[serde(default)]
    kind: ClassifierKind,
    epochs: Option<u32>,
    learning_rate: Option<f64>,
    dropout: Option<f64>,
    warmup_steps: Option<u32>,
    selection: Option<ClassifierSelection>,
    seed: Option<u64>,
    backend_cmd: Option<String>,
}

impl TryFrom<PartialClassifierConfig> for ClassifierConfig {
    type Error = MetricError;

    fn try_from(p: PartialClassifierConfig) -> Result<Self, Self::Error> {
        let d = match p.kind {
            ClassifierKind::BowLinear => ClassifierConfig::bow_linear(),
            ClassifierKind::External => ClassifierConfig {
                kind: ClassifierKind::External,
                learning_rate: EXTERNAL_LEARNING_RATE,
                ..ClassifierConfig::bow_linear()
            },
        };
        Ok(ClassifierConfig {
            kind: p.kind,
            epochs: p.epochs.unwrap_or(d.epochs),
            learning_rate: p.learning_rate.unwrap_or(d.learning_rate),
            dropout: p.dropout.unwrap_or(d.dropout),
            warmup_steps: p.warmup_steps.unwrap_or(d.warmup_steps),
            selection: p.selection.unwrap_or(d.selection),
            seed: p.seed.unwrap_or(d.seed),
            backend_cmd: p.backend_cmd,
        })
    }
}

/// A trained text classifier over one task.
pub trait Classifier: Send + Sync {
    fn task(&self) -> &TaskSpec;

    /// One label of [`Classifier::task`] per text.
    fn predict(&self, texts: &[&str]) -> Result<Vec<String>, MetricError>;
}

/// Fraction of `split` predicted correctly.
pub fn accuracy(classifier: &dyn Classifier, split: &DatasetSplit) -> Result<f64, MetricError> {
    if split.is_empty() {
        return Err(MetricError::UndefinedMetric("accuracy of an empty split".into()));
    }
    let predicted = classifier.predict(&split.texts())?;
    let correct = predicted
        .iter()
        .zip(split.iter())
        .filter(|(p, ex)| p.as_str() == ex.label())
        .count();
    Ok(correct as f64 / split.len() as f64)
}

/// Trains a classifier and keeps the epoch with the best dev accuracy.
pub fn train_classifier(
    train: &DatasetSplit,
    dev: &DatasetSplit,
    config: &ClassifierConfig,
) -> Result<Box<dyn Classifier>, MetricError> {
    config.validate()?;
    if train.is_empty() {
        return Err(MetricError::InvalidArgument("empty training split".into()));
    }
    if dev.is_empty() {
        return Err(MetricError::InvalidArgument("empty dev split".into()));
    }
    if train.task() != dev.task() {
        return Err(MetricError::InvalidArgument(format!(
            "train task {} differs from dev task {}",
            train.task().name(),
            dev.task().name()
        )));
    }
    let classes: HashSet<&str> = train.iter().map(LabeledExample::label).collect();
    if classes.len() < 2 {
        return Err(MetricError::DegenerateData(format!(
            "training split has {} class(es)",
            classes.len()
        )));
    }
    match config.kind {
        ClassifierKind::BowLinear => Ok(Box::new(BowLinearClassifier::fit(train, dev, config))),
        ClassifierKind::External => Ok(Box::new(ExternalClassifier::train(train, dev, config)?)),
    }
}

/// Multiclass softmax regression over bag-of-words counts, trained by
/// per-example gradient descent.
#[derive(Clone, Debug)]
pub struct BowLinearClassifier {
    task: TaskSpec,
    vocab: BTreeMap<String, usize>,
    /// `classes x (vocab + 1)`, bias in the last column.
    weights: Vec<Vec<f64>>,
    best_epoch: usize,
    best_dev_accuracy: f64,
}

type Features = Vec<(usize, f64)>;

impl BowLinearClassifier {
    pub fn fit(train: &DatasetSplit, dev: &DatasetSplit, config: &ClassifierConfig) -> Self {
        let task = train.task().clone();
        let mut vocab = BTreeMap::new();
        for ex in train {
            for tok in tokenize(ex.text()) {
                vocab.entry(tok).or_insert(0);
            }
        }
        for (i, v) in vocab.values_mut().enumerate() {
            *v = i;
        }
        let dim = vocab.len() + 1;
        let classes = task.labels().len();
        let mut model = Self {
            task,
            vocab,
            weights: vec![vec![0.0; dim]; classes],
            best_epoch: 0,
            best_dev_accuracy: f64::NEG_INFINITY,
        };
        let encode = |split: &DatasetSplit, m: &Self| -> Vec<(Features, usize)> {
            split
                .iter()
                .map(|ex| {
                    let y = m.task.index_of(ex.label()).expect("label in task");
                    (m.features(ex.text()), y)
                })
                .collect()
        };
        let train_set = encode(train, &model);
        let dev_set = encode(dev, &model);

        let mut rng = seed::rng_from_seed(config.seed);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut best_weights = model.weights.clone();
        for epoch in 0..config.epochs as usize {
            order.shuffle(&mut rng);
            for &i in &order {
                let (x, y) = &train_set[i];
                let p = model.probabilities(x);
                for (c, row) in model.weights.iter_mut().enumerate() {
                    let g = p[c] - if c == *y { 1.0 } else { 0.0 };
                    if g == 0.0 {
                        continue;
                    }
                    for &(j, v) in x {
                        row[j] -= config.learning_rate * g * v;
                    }
                    row[dim - 1] -= config.learning_rate * g;
                }
            }
            let (acc, loss) = model.evaluate(&dev_set);
            // higher accuracy wins; lower dev loss breaks ties
            if (acc, -loss) > best {
                best = (acc, -loss);
                best_weights = model.weights.clone();
                model.best_epoch = epoch;
                model.best_dev_accuracy = acc;
            }
        }
        model.weights = best_weights;
        model
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_dev_accuracy(&self) -> f64 {
        self.best_dev_accuracy
    }

    fn features(&self, text: &str) -> Features {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(&j) = self.vocab.get(&tok) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    fn scores(&self, x: &Features) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row[row.len() - 1] + x.iter().map(|&(j, v)| row[j] * v).sum::<f64>())
            .collect()
    }

    fn probabilities(&self, x: &Features) -> Vec<f64> {
        let s = self.scores(x);
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    fn evaluate(&self, set: &[(Features, usize)]) -> (f64, f64) {
        let mut correct = 0;
        let mut loss = 0.0;
        for (x, y) in set {
            let p = self.probabilities(x);
            if argmax(&p) == *y {
                correct += 1;
            }
            loss -= p[*y].max(1e-12).ln();
        }
        (correct as f64 / set.len() as f64, loss / set.len() as f64)
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl Classifier for BowLinearClassifier {
    fn task(&self) -> &TaskSpec {
        &self.task
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<String>, MetricError> {
        Ok(texts
            .iter()
            .map(|t| self.task.labels()[argmax(&self.scores(&self.features(t)))].clone())
            .collect())
    }
}

/// Classifier living in a child process (`train` / `predict` ops).
pub struct ExternalClassifier {
    task: TaskSpec,
    process: Mutex<ExternalProcess>,
}

impl ExternalClassifier {
    pub fn train(
        train: &DatasetSplit,
        dev: &DatasetSplit,
        config: &ClassifierConfig,
    ) -> Result<Self, MetricError> {
        let cmd = config
            .backend_cmd
            .as_deref()
            .ok_or_else(|| MetricError::Config("external classifier requires backend_cmd".into()))?;
        let mut process = ExternalProcess::spawn(cmd)?;
        let wire = |s: &DatasetSplit| s.iter().map(WireExample::from).collect::<Vec<_>>();
        process.request(
            "train",
            json!({
                "train": wire(train),
                "dev": wire(dev),
                "labels": train.task().labels(),
                "config": config,
            }),
        )?;
        Ok(Self {
            task: train.task().clone(),
            process: Mutex::new(process),
        })
    }
}

impl Classifier for ExternalClassifier {
    fn task(&self) -> &TaskSpec {
        &self.task
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<String>, MetricError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let reply = self
            .process
            .lock()
            .expect("classifier process lock poisoned")
            .request("predict", json!({ "texts": texts }))?;
        let bad = |message: String| {
            MetricError::Backend(BackendError::Protocol {
                op: "predict".into(),
                message,
            })
        };
        let labels: Vec<String> = reply
            .get("labels")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("reply lacks \"labels\"".into()))?
            .iter()
            .map(|v| v.as_str().map(str::to_lowercase))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("labels must be strings".into()))?;
        if labels.len() != texts.len() {
            return Err(bad(format!("{} labels for {} texts", labels.len(), texts.len())));
        }
        if let Some(l) = labels.iter().find(|l| !self.task.contains(l)) {
            return Err(bad(format!("unknown label {l:?}")));
        }
        Ok(labels)
    }
}

/// Share of synthetic examples whose predicted label equals the label they
/// were generated for.
pub fn semantic_fidelity(
    synthetic: &DatasetSplit,
    oracle: &dyn Classifier,
) -> Result<FidelityReport, MetricError> {
    if synthetic.is_empty() {
        return Err(MetricError::UndefinedMetric("fidelity of an empty synthetic set".into()));
    }
    let predicted = oracle.predict(&synthetic.texts())?;
    let mut per_label: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (p, ex) in predicted.iter().zip(synthetic.iter()) {
        let entry = per_label.entry(ex.label().to_string()).or_default();
        entry.1 += 1;
        if p == ex.label() {
            entry.0 += 1;
            correct += 1;
        }
    }
    Ok(FidelityReport {
        accuracy: correct as f64 / synthetic.len() as f64,
        per_label_accuracy: per_label
            .into_iter()
            .map(|(l, (c, n))| (l, c as f64 / n as f64))
            .collect(),
        n: synthetic.len(),
    })
}

/// Trains the fidelity oracle on the full training and test partitions
/// combined, selecting on `dev`.
pub fn train_fidelity_oracle(
    train: &DatasetSplit,
    test: &DatasetSplit,
    dev: &DatasetSplit,
    config: &ClassifierConfig,
) -> Result<Box<dyn Classifier>, MetricError> {
    let combined: Vec<LabeledExample> = train
        .iter()
        .map(|e| ("train", e))
        .chain(test.iter().map(|e| ("test", e)))
        .map(|(tag, e)| LabeledExample::new(format!("{tag}-{}", e.id()), e.label(), e.text()))
        .collect::<Result<_, _>>()?;
    let combined = DatasetSplit::new(train.task().clone(), SplitKind::Train, combined)?;
    train_classifier(&combined, dev, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(task: &TaskSpec, rows: &[(&str, &str)]) -> DatasetSplit {
        let ex = rows
            .iter()
            .enumerate()
            .map(|(i, (l, t))| LabeledExample::new(i.to_string(), *l, *t).unwrap())
            .collect();
        DatasetSplit::new(task.clone(), SplitKind::Train, ex).unwrap()
    }

    #[test]
    fn ttr_examples() {
        assert_eq!(type_token_ratio(&["a b a b"], 1).unwrap().ttr, 0.5);
        assert_eq!(type_token_ratio(&["a b c"], 3).unwrap().ttr, 1.0);
        assert_eq!(type_token_ratio(&["A a"], 1).unwrap().ttr, 0.5);
        // no n-gram spans a boundary: "b c" is never formed
        assert_eq!(ngram_counts(&["a b", "c d"], 2), (2, 2));
        assert!(matches!(type_token_ratio(&["a b"], 3), Err(MetricError::UndefinedMetric(_))));
        assert!(type_token_ratio::<&str>(&[], 1).is_err());
    }

    fn separable() -> (DatasetSplit, DatasetSplit) {
        let task = TaskSpec::new("toy", ["a", "b"]).unwrap();
        let train = split(
            &task,
            &[
                ("a", "aa one two"),
                ("a", "three aa four"),
                ("a", "five six aa"),
                ("b", "bb one two"),
                ("b", "three bb four"),
                ("b", "five six bb"),
            ],
        );
        let dev = split(&task, &[("a", "aa seven"), ("b", "eight bb"), ("a", "two aa"), ("b", "bb one")]);
        (train, dev)
    }

    #[test]
    fn bow_separates_toy_set() {
        let (train, dev) = separable();
        let clf = train_classifier(&train, &dev, &ClassifierConfig::default()).unwrap();
        assert_eq!(accuracy(clf.as_ref(), &dev).unwrap(), 1.0);
        assert_eq!(accuracy(clf.as_ref(), &train).unwrap(), 1.0);
        let texts = ["aa x", "bb y"];
        assert_eq!(clf.predict(&texts).unwrap(), clf.predict(&texts).unwrap());
        assert!(clf.predict(&[]).unwrap().is_empty());
    }

    #[test]
    fn bow_is_deterministic() {
        let (train, dev) = separable();
        let a = BowLinearClassifier::fit(&train, &dev, &ClassifierConfig::default().with_seed(3));
        let b = BowLinearClassifier::fit(&train, &dev, &ClassifierConfig::default().with_seed(3));
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn classifier_errors() {
        let (train, dev) = separable();
        let empty = DatasetSplit::empty(train.task().clone(), SplitKind::Dev);
        assert!(matches!(
            train_classifier(&train, &empty, &ClassifierConfig::default()),
            Err(MetricError::InvalidArgument(_))
        ));
        let one_class = split(train.task(), &[("a", "x"), ("a", "y")]);
        assert!(matches!(
            train_classifier(&one_class, &dev, &ClassifierConfig::default()),
            Err(MetricError::DegenerateData(_))
        ));
        let cfg = ClassifierConfig {
            kind: ClassifierKind::External,
            ..ClassifierConfig::default()
        };
        assert!(matches!(train_classifier(&train, &dev, &cfg), Err(MetricError::Config(_))));
    }

    struct Fixed(TaskSpec, Vec<String>);

    impl Classifier for Fixed {
        fn task(&self) -> &TaskSpec {
            &self.0
        }
        fn predict(&self, texts: &[&str]) -> Result<Vec<String>, MetricError> {
            Ok(self.1[..texts.len()].to_vec())
        }
    }

    #[test]
    fn fidelity_examples() {
        let task = TaskSpec::new("t", ["p", "n"]).unwrap();
        let syn = split(&task, &[("p", "x"), ("p", "y"), ("p", "z")]);
        let oracle = Fixed(task.clone(), vec!["p".into(), "n".into(), "p".into()]);
        let rep = semantic_fidelity(&syn, &oracle).unwrap();
        assert!((rep.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.n, 3);
        let wrong = Fixed(task.clone(), vec!["n".into(); 3]);
        assert_eq!(semantic_fidelity(&syn, &wrong).unwrap().accuracy, 0.0);
        let empty = DatasetSplit::empty(task.clone(), SplitKind::Synthetic);
        assert!(matches!(semantic_fidelity(&empty, &oracle), Err(MetricError::UndefinedMetric(_))));
    }

    #[test]
    fn classifier_config_defaults_by_kind() {
        let c: ClassifierConfig = serde_json::from_str(r#"{"kind":"external","backend_cmd":"x"}"#).unwrap();
        assert_eq!(c.learning_rate, 4e-5);
        assert_eq!(c.epochs, 8);
        assert_eq!(c.warmup_steps, 100);
        assert_eq!(c.dropout, 0.1);
        let c: ClassifierConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ClassifierConfig::bow_linear());
    }
}
