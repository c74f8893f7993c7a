//! Deterministic stand-in for a tuned generator.
//!
//! The mock copies the source text and swaps one seed-selected word for a
//! word from a fixed per-label lexicon. Lexicons of different labels never
//! share a word, so a lookup classifier recovers the label exactly. The
//! adversarial variant draws from the next label's lexicon instead.

use rand::Rng;

use super::{BackendError, GenerationRecord, Generator, Method, TunedGenerator};
use crate::corpus::{DatasetSplit, LabeledExample, TaskSpec};
use crate::seed;

pub const MOCK_LEXICON_SIZE: usize = 16;

/// The `MOCK_LEXICON_SIZE` words owned by `label`.
pub fn mock_lexicon(label: &str) -> Vec<String> {
    (0..MOCK_LEXICON_SIZE)
        .map(|i| format!("{label}_w{i:02}"))
        .collect()
}

pub fn mock_synthesize(example: &LabeledExample, seed: u64) -> String {
    mock_synthesize_from(example, example.label(), seed)
}

/// Replaces one word of `example` with a word from `lexicon_label`'s lexicon.
pub fn mock_synthesize_from(example: &LabeledExample, lexicon_label: &str, seed: u64) -> String {
    let mut rng = seed::rng_from_seed(seed);
    let mut words: Vec<String> = example.words().into_iter().map(String::from).collect();
    let lexicon = mock_lexicon(lexicon_label);
    let pos = rng.gen_range(0..words.len());
    let mut pick = rng.gen_range(0..lexicon.len());
    if lexicon[pick] == words[pos] {
        pick = (pick + 1) % lexicon.len();
    }
    words[pos] = lexicon[pick].clone();
    words.join(" ")
}

#[derive(Clone, Debug)]
pub struct MockBackend {
    task: TaskSpec,
    adversarial: bool,
}

impl MockBackend {
    pub fn new(task: TaskSpec) -> Self {
        Self {
            task,
            adversarial: false,
        }
    }

    /// Label-shuffled mock: every example receives a word of the wrong class
    /// and the emitted label is that wrong class.
    pub fn adversarial(task: TaskSpec) -> Self {
        Self {
            task,
            adversarial: true,
        }
    }

    fn lexicon_label<'a>(&'a self, label: &'a str) -> &'a str {
        if !self.adversarial {
            return label;
        }
        let labels = self.task.labels();
        match self.task.index_of(label) {
            Some(i) => &labels[(i + 1) % labels.len()],
            None => label,
        }
    }
}

impl Generator for MockBackend {
    fn method(&self) -> Method {
        Method::Mock
    }

    fn fine_tune(
        self: Box<Self>,
        _train: &DatasetSplit,
        _dev: &DatasetSplit,
    ) -> Result<Box<dyn TunedGenerator>, BackendError> {
        Ok(self)
    }
}

impl TunedGenerator for MockBackend {
    fn method(&self) -> Method {
        Method::Mock
    }

    fn synthesize(
        &mut self,
        example: &LabeledExample,
        seed: u64,
    ) -> Result<GenerationRecord, BackendError> {
        let lexicon_label = self.lexicon_label(example.label()).to_string();
        let text = mock_synthesize_from(example, &lexicon_label, seed);
        let raw = format!("{lexicon_label} {text}");
        Ok(GenerationRecord::new(
            example,
            Method::Mock,
            raw,
            Some(lexicon_label),
            text,
            seed,
        ))
    }

    fn try_clone(&self) -> Option<Box<dyn TunedGenerator>> {
        Some(Box::new(self.clone()))
    }
}
