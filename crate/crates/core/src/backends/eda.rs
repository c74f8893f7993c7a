//! Easy data augmentation: one random word-level edit per call.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationRecord, Generator, Method, TunedGenerator};
use crate::corpus::{DatasetSplit, LabeledExample};
use crate::seed;

/// Word to synonyms, keyed by lower-cased word.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynonymLexicon(HashMap<String, Vec<String>>);

impl SynonymLexicon {
    pub fn new(map: HashMap<String, Vec<String>>) -> Self {
        Self(
            map.into_iter()
                .map(|(k, v)| {
                    let v = v.into_iter().filter(|s| !s.trim().is_empty() && !s.contains(char::is_whitespace)).collect();
                    (k.to_lowercase(), v)
                })
                .collect(),
        )
    }

    /// Reads a JSON object `{"word": ["synonym", ...]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let content = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("lexicon {}: {e}", path.display())))?;
        let map: HashMap<String, Vec<String>> = serde_json::from_str(&content)
            .map_err(|e| BackendError::Config(format!("lexicon {}: {e}", path.display())))?;
        Ok(Self::new(map))
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.0
            .get(&word.to_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdaOp {
    SynonymReplacement,
    RandomSwap,
    RandomDeletion,
    RandomInsertion,
}

impl EdaOp {
    pub const ALL: [EdaOp; 4] = [
        EdaOp::SynonymReplacement,
        EdaOp::RandomSwap,
        EdaOp::RandomDeletion,
        EdaOp::RandomInsertion,
    ];
}

/// A concrete edit with its positions resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdaEdit {
    Identity,
    Replace { pos: usize, word: String },
    Swap(usize, usize),
    Delete(usize),
    /// Insert a copy of the word at `source` before position `at`.
    Insert { source: usize, at: usize },
}

/// Applies `edit`. Deleting the last remaining word is a no-op.
pub fn apply_edit(tokens: &[String], edit: &EdaEdit) -> Vec<String> {
    let mut out = tokens.to_vec();
    match edit {
        EdaEdit::Identity => {}
        EdaEdit::Replace { pos, word } => out[*pos] = word.clone(),
        EdaEdit::Swap(i, j) => out.swap(*i, *j),
        EdaEdit::Delete(i) => {
            if out.len() > 1 {
                out.remove(*i);
            }
        }
        EdaEdit::Insert { source, at } => {
            let word = out[*source].clone();
            out.insert(*at, word);
        }
    }
    out
}

/// Resolves `op` into an edit over `tokens`. Synonym replacement without a
/// lexicon entry for any word resolves to [`EdaEdit::Identity`].
pub fn sample_edit<R: Rng + ?Sized>(
    tokens: &[String],
    op: EdaOp,
    lexicon: Option<&SynonymLexicon>,
    rng: &mut R,
) -> EdaEdit {
    let m = tokens.len();
    match op {
        EdaOp::SynonymReplacement => {
            let Some(lex) = lexicon else {
                return EdaEdit::Identity;
            };
            let candidates: Vec<usize> = (0..m)
                .filter(|&i| !lex.synonyms(&tokens[i]).is_empty())
                .collect();
            if candidates.is_empty() {
                return EdaEdit::Identity;
            }
            let pos = candidates[rng.gen_range(0..candidates.len())];
            let syns = lex.synonyms(&tokens[pos]);
            EdaEdit::Replace {
                pos,
                word: syns[rng.gen_range(0..syns.len())].clone(),
            }
        }
        EdaOp::RandomSwap => {
            if m < 2 {
                return EdaEdit::Identity;
            }
            let i = rng.gen_range(0..m);
            let mut j = rng.gen_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            EdaEdit::Swap(i, j)
        }
        EdaOp::RandomDeletion => {
            if m < 2 {
                return EdaEdit::Identity;
            }
            EdaEdit::Delete(rng.gen_range(0..m))
        }
        EdaOp::RandomInsertion => EdaEdit::Insert {
            source: rng.gen_range(0..m),
            at: rng.gen_range(0..=m),
        },
    }
}

/// Applies one uniformly chosen EDA operation to `text`. The output always
/// keeps at least one word.
pub fn eda_perturb<R: Rng + ?Sized>(
    text: &str,
    rng: &mut R,
    lexicon: Option<&SynonymLexicon>,
) -> String {
    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    if tokens.is_empty() {
        return text.to_string();
    }
    let op = EdaOp::ALL[rng.gen_range(0..EdaOp::ALL.len())];
    let edit = sample_edit(&tokens, op, lexicon, rng);
    apply_edit(&tokens, &edit).join(" ")
}

/// Tune-free EDA backend.
#[derive(Clone, Debug, Default)]
pub struct EdaBackend {
    lexicon: Option<Arc<SynonymLexicon>>,
}

impl EdaBackend {
    pub fn new(lexicon: Option<Arc<SynonymLexicon>>) -> Self {
        Self { lexicon }
    }
}

impl Generator for EdaBackend {
    fn method(&self) -> Method {
        Method::Eda
    }

    fn fine_tune(
        self: Box<Self>,
        _train: &DatasetSplit,
        _dev: &DatasetSplit,
    ) -> Result<Box<dyn TunedGenerator>, BackendError> {
        Ok(self)
    }
}

impl TunedGenerator for EdaBackend {
    fn method(&self) -> Method {
        Method::Eda
    }

    fn synthesize(
        &mut self,
        example: &LabeledExample,
        seed: u64,
    ) -> Result<GenerationRecord, BackendError> {
        let mut rng = seed::rng_from_seed(seed);
        let text = eda_perturb(example.text(), &mut rng, self.lexicon.as_deref());
        if text.trim().is_empty() {
            return Err(BackendError::EmptyGeneration {
                source_id: example.id().into(),
            });
        }
        Ok(GenerationRecord::new(
            example,
            Method::Eda,
            text.clone(),
            None,
            text,
            seed,
        ))
    }

    fn try_clone(&self) -> Option<Box<dyn TunedGenerator>> {
        Some(Box::new(self.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn forced_edits() {
        assert_eq!(apply_edit(&toks("a b c"), &EdaEdit::Swap(0, 2)).join(" "), "c b a");
        assert_eq!(apply_edit(&toks("a"), &EdaEdit::Delete(0)).join(" "), "a");
        assert_eq!(apply_edit(&toks("a b"), &EdaEdit::Delete(0)).join(" "), "b");
        assert_eq!(
            apply_edit(&toks("a b"), &EdaEdit::Insert { source: 1, at: 0 }).join(" "),
            "b a b"
        );
    }

    #[test]
    fn synonym_replacement_degrades_without_lexicon() {
        let mut rng = seed::rng_from_seed(0);
        assert_eq!(
            sample_edit(&toks("a b"), EdaOp::SynonymReplacement, None, &mut rng),
            EdaEdit::Identity
        );
        let lex = SynonymLexicon::new(HashMap::from([("Good".to_string(), vec!["fine".to_string()])]));
        let edit = sample_edit(&toks("a good film"), EdaOp::SynonymReplacement, Some(&lex), &mut rng);
        assert_eq!(edit, EdaEdit::Replace { pos: 1, word: "fine".into() });
    }

    #[test]
    fn single_word_inputs_never_empty() {
        // every op on a one-word input: identity for SR/swap/deletion,
        // duplication for insertion
        let one = toks("a");
        let mut rng = seed::rng_from_seed(1);
        for op in EdaOp::ALL {
            let edit = sample_edit(&one, op, None, &mut rng);
            let out = apply_edit(&one, &edit);
            match op {
                EdaOp::RandomInsertion => assert_eq!(out, toks("a a")),
                _ => assert_eq!(out, one),
            }
        }
        for s in 0..200 {
            let out = eda_perturb("a", &mut seed::rng_from_seed(s), None);
            assert!(out == "a" || out == "a a", "{out}");
        }
    }

    #[test]
    fn swap_never_picks_same_position() {
        let t = toks("a b c d");
        let mut rng = seed::rng_from_seed(2);
        for _ in 0..500 {
            match sample_edit(&t, EdaOp::RandomSwap, None, &mut rng) {
                EdaEdit::Swap(i, j) => assert_ne!(i, j),
                other => panic!("{other:?}"),
            }
        }
    }
}
