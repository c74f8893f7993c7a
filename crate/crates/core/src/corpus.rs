//! Labeled text corpora: validated examples, task label sets, TSV persistence
//! and stratified low-resource subsampling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label {label:?} is not part of task {task:?}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownLabel {
        label: String,
        task: String,
        line: Option<usize>,
    },
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("class {class:?} has {available} examples, {needed} required")]
    Capacity {
        class: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One `(text, label)` pair with an id that is stable within its dataset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawExample")]
pub struct LabeledExample {
    id: String,
    label: String,
    text: String,
}

#[derive(Deserialize)]
struct RawExample {
    id: String,
    label: String,
    text: String,
}

impl TryFrom<RawExample> for LabeledExample {
    type Error = CorpusError;

    fn try_from(raw: RawExample) -> Result<Self, Self::Error> {
        LabeledExample::new(raw.id, raw.label, raw.text)
    }
}

impl LabeledExample {
    /// Validates the text (non-empty after trimming, no tabs or newlines).
    /// Label membership is checked when the example joins a [`DatasetSplit`].
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let (id, label, text) = (id.into(), label.into(), text.into());
        if text.trim().is_empty() {
            return Err(CorpusError::InvalidExample(format!(
                "example {id:?} has empty text"
            )));
        }
        if let Some(c) = text.chars().find(|c| matches!(c, '\t' | '\n' | '\r')) {
            return Err(CorpusError::InvalidExample(format!(
                "example {id:?} text contains {c:?}"
            )));
        }
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidExample(format!(
                "example {id:?} has malformed label {label:?}"
            )));
        }
        Ok(Self { id, label, text })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Whitespace tokens of the trimmed text.
    pub fn words(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

/// Dataset identity plus its ordered, lower-cased label vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTask")]
pub struct TaskSpec {
    name: String,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct RawTask {
    name: String,
    labels: Vec<String>,
}

impl TryFrom<RawTask> for TaskSpec {
    type Error = CorpusError;

    fn try_from(raw: RawTask) -> Result<Self, Self::Error> {
        TaskSpec::new(raw.name, raw.labels)
    }
}

impl TaskSpec {
    /// Labels are lower-cased on construction. Labels containing whitespace
    /// are rejected: generated text is matched against labels one
    /// whitespace token at a time.
    pub fn new<I, S>(name: impl Into<String>, labels: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = name.into();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for label in labels {
            let label = label.as_ref().to_lowercase();
            if label.is_empty() {
                return Err(CorpusError::InvalidTask(format!("{name}: empty label")));
            }
            if label.chars().any(char::is_whitespace) {
                return Err(CorpusError::InvalidTask(format!(
                    "{name}: label {label:?} contains whitespace"
                )));
            }
            if !seen.insert(label.clone()) {
                return Err(CorpusError::InvalidTask(format!(
                    "{name}: duplicate label {label:?}"
                )));
            }
            out.push(label);
        }
        if out.is_empty() {
            return Err(CorpusError::InvalidTask(format!("{name}: no labels")));
        }
        Ok(Self { name, labels: out })
    }

    /// Stanford Sentiment Treebank, binary.
    pub fn sst2() -> Self {
        Self::new("sst2", ["Positive", "Negative"]).expect("static task")
    }

    /// TREC question types.
    pub fn trec() -> Self {
        Self::new(
            "trec",
            [
                "Description",
                "Entity",
                "Abbreviation",
                "Human",
                "Location",
                "Numeric",
            ],
        )
        .expect("static task")
    }

    /// SNIPS voice-assistant intents.
    pub fn snips() -> Self {
        Self::new(
            "snips",
            [
                "PlayMusic",
                "GetWeather",
                "RateBook",
                "SearchScreeningEvent",
                "SearchCreativeWork",
                "AddToPlaylist",
                "BookRestaurant",
            ],
        )
        .expect("static task")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    Dev,
    Test,
    Synthetic,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitKind::Train => "train",
            SplitKind::Dev => "dev",
            SplitKind::Test => "test",
            SplitKind::Synthetic => "synthetic",
        })
    }
}

/// An ordered collection of examples over one task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    task: TaskSpec,
    kind: SplitKind,
    examples: Vec<LabeledExample>,
}

impl DatasetSplit {
    /// Checks id uniqueness and label membership.
    pub fn new(
        task: TaskSpec,
        kind: SplitKind,
        examples: Vec<LabeledExample>,
    ) -> Result<Self, CorpusError> {
        let mut ids = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if !task.contains(ex.label()) {
                return Err(CorpusError::UnknownLabel {
                    label: ex.label().to_string(),
                    task: task.name().to_string(),
                    line: None,
                });
            }
            if !ids.insert(ex.id()) {
                return Err(CorpusError::DuplicateId(ex.id().to_string()));
            }
        }
        Ok(Self {
            task,
            kind,
            examples,
        })
    }

    pub fn empty(task: TaskSpec, kind: SplitKind) -> Self {
        Self {
            task,
            kind,
            examples: Vec::new(),
        }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn kind(&self) -> SplitKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: SplitKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(LabeledExample::text).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.examples.iter().map(LabeledExample::label).collect()
    }

    /// Per-label example counts, every task label present (possibly zero).
    pub fn label_histogram(&self) -> BTreeMap<String, usize> {
        let mut hist: BTreeMap<String, usize> =
            self.task.labels().iter().map(|l| (l.clone(), 0)).collect();
        for ex in &self.examples {
            *hist.entry(ex.label().to_string()).or_default() += 1;
        }
        hist
    }
}

impl<'a> IntoIterator for &'a DatasetSplit {
    type Item = &'a LabeledExample;
    type IntoIter = std::slice::Iter<'a, LabeledExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// Parses `label<TAB>text` lines. Ids are zero-based line indices.
pub fn parse_tsv(content: &str, task: &TaskSpec) -> Result<DatasetSplit, CorpusError> {
    let mut examples = Vec::new();
    let body = content.strip_suffix('\n').unwrap_or(content);
    if body.is_empty() {
        return Ok(DatasetSplit::empty(task.clone(), SplitKind::Train));
    }
    for (idx, line) in body.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::Parse {
                line: lineno,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let label = fields[0].trim().to_lowercase();
        if !task.contains(&label) {
            return Err(CorpusError::UnknownLabel {
                label,
                task: task.name().to_string(),
                line: Some(lineno),
            });
        }
        let example =
            LabeledExample::new(idx.to_string(), label, fields[1]).map_err(|e| {
                CorpusError::Parse {
                    line: lineno,
                    message: e.to_string(),
                }
            })?;
        examples.push(example);
    }
    DatasetSplit::new(task.clone(), SplitKind::Train, examples)
}

/// Loads a `label<TAB>text` file (UTF-8, no header). The returned split has
/// kind [`SplitKind::Train`]; use [`DatasetSplit::with_kind`] to relabel.
pub fn load_tsv(path: impl AsRef<Path>, task: &TaskSpec) -> Result<DatasetSplit, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tsv(&content, task)
}

pub fn write_tsv<W: Write>(split: &DatasetSplit, mut out: W) -> io::Result<()> {
    for ex in split {
        writeln!(out, "{}\t{}", ex.label(), ex.text())?;
    }
    out.flush()
}

pub fn save_tsv(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    write_tsv(split, BufWriter::new(file)).map_err(io_err)
}

/// Draws `n_per_class` training and `dev_per_class` dev examples from every
/// class of `train`.
///
/// Per class, candidate ids are sorted lexicographically and shuffled with an
/// RNG seeded from `(seed, label)`; the first `n_per_class` go to train and
/// the next `dev_per_class` to dev. Selection therefore does not depend on
/// the order of examples in the input. Outputs are grouped by class in task
/// label order.
pub fn subsample_low_resource(
    train: &DatasetSplit,
    n_per_class: usize,
    dev_per_class: usize,
    seed: u64,
) -> Result<(DatasetSplit, DatasetSplit), CorpusError> {
    if n_per_class == 0 || dev_per_class == 0 {
        return Err(CorpusError::InvalidArgument(
            "n_per_class and dev_per_class must be positive".into(),
        ));
    }
    let needed = n_per_class + dev_per_class;
    let task = train.task();
    let mut by_class: BTreeMap<&str, Vec<&LabeledExample>> = BTreeMap::new();
    for ex in train {
        by_class.entry(ex.label()).or_default().push(ex);
    }
    // check capacity for every class before drawing anything
    for label in task.labels() {
        let available = by_class.get(label.as_str()).map_or(0, Vec::len);
        if available < needed {
            return Err(CorpusError::Capacity {
                class: label.clone(),
                needed,
                available,
            });
        }
    }

    let mut train_sub = Vec::with_capacity(n_per_class * task.labels().len());
    let mut dev_sub = Vec::with_capacity(dev_per_class * task.labels().len());
    for label in task.labels() {
        let mut candidates = by_class.remove(label.as_str()).unwrap_or_default();
        candidates.sort_by(|a, b| a.id().cmp(b.id()));
        let mut rng = seed::rng_from_seed(seed::mix(seed, &[seed::fnv1a(label.as_bytes())]));
        candidates.shuffle(&mut rng);
        train_sub.extend(candidates[..n_per_class].iter().map(|e| (*e).clone()));
        dev_sub.extend(candidates[n_per_class..needed].iter().map(|e| (*e).clone()));
    }
    Ok((
        DatasetSplit::new(task.clone(), SplitKind::Train, train_sub)?,
        DatasetSplit::new(task.clone(), SplitKind::Dev, dev_sub)?,
    ))
}
