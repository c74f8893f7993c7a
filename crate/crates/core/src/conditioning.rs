//! Label conditioning: prefix encoding, auto-regressive training streams and
//! prompts, and recovery of the label from generated text.
//!
//! A "word" throughout the toolkit is a whitespace token of the trimmed text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetSplit, LabeledExample, TaskSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConditioningError {
    #[error("invalid markers: {0}")]
    InvalidMarkers(String),
}

/// How the class label reaches the generator.
///
/// Both modes put the label in front of the sequence. `Expand` additionally
/// asks the backend to register every label as one new vocabulary token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    #[default]
    Prepend,
    Expand,
}

impl ConditioningMode {
    /// Labels the backend must add to its vocabulary as single tokens.
    pub fn added_tokens(self, task: &TaskSpec) -> Vec<String> {
        match self {
            ConditioningMode::Prepend => Vec::new(),
            ConditioningMode::Expand => task.labels().to_vec(),
        }
    }
}

/// Separator and end-of-sequence markers for auto-regressive streams.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArMarkers {
    pub sep: String,
    pub eos: String,
}

impl Default for ArMarkers {
    fn default() -> Self {
        Self {
            sep: "SEP".into(),
            eos: "EOS".into(),
        }
    }
}

impl ArMarkers {
    pub fn validate(&self, task: &TaskSpec) -> Result<(), ConditioningError> {
        for (name, m) in [("sep", &self.sep), ("eos", &self.eos)] {
            if m.is_empty() || m.chars().any(char::is_whitespace) {
                return Err(ConditioningError::InvalidMarkers(format!(
                    "{name} marker {m:?} must be one non-empty token"
                )));
            }
            if let Some(label) = task.labels().iter().find(|l| l.contains(m.as_str())) {
                return Err(ConditioningError::InvalidMarkers(format!(
                    "{name} marker {m:?} appears inside label {label:?}"
                )));
            }
        }
        if self.sep == self.eos {
            return Err(ConditioningError::InvalidMarkers(
                "sep and eos must differ".into(),
            ));
        }
        Ok(())
    }
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// `<label> <text>`.
pub fn prepend_encode(example: &LabeledExample) -> String {
    format!("{} {}", example.label(), example.text())
}

/// Splits a leading label token off generated text.
///
/// The first whitespace token is lower-cased and compared against the task
/// labels. On a match the label and the remaining text (leading whitespace
/// removed) are returned; otherwise `generated` comes back unchanged.
pub fn strip_label(generated: &str, task: &TaskSpec) -> (Option<String>, String) {
    let trimmed = generated.trim_start();
    let (head, rest) = match trimmed.find(char::is_whitespace) {
        Some(pos) => (&trimmed[..pos], trimmed[pos..].trim_start()),
        None => (trimmed, ""),
    };
    let head = head.to_lowercase();
    if !head.is_empty() && task.contains(&head) {
        (Some(head), rest.to_string())
    } else {
        (None, generated.to_string())
    }
}

/// `y_1 SEP x_1 EOS y_2 SEP x_2 EOS ...` over the split, in order.
pub fn ar_corpus_encode(train: &DatasetSplit, markers: &ArMarkers) -> String {
    train
        .iter()
        .map(|ex| ar_encode_example(ex, markers))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One `label SEP words EOS` segment.
pub fn ar_encode_example(example: &LabeledExample, markers: &ArMarkers) -> String {
    let mut tokens = Vec::with_capacity(example.words().len() + 3);
    tokens.push(example.label());
    tokens.push(&markers.sep);
    tokens.extend(example.words());
    tokens.push(&markers.eos);
    tokens.join(" ")
}

/// `label SEP w_1 .. w_j` with `j = min(k, words in source_text)`.
pub fn ar_prompt(label: &str, source_text: &str, k: usize, markers: &ArMarkers) -> String {
    let mut tokens = vec![label, markers.sep.as_str()];
    tokens.extend(source_text.split_whitespace().take(k));
    tokens.join(" ")
}

/// Decodes an auto-regressive continuation back into `(label, text)`.
///
/// Everything from the first `eos` token on is dropped, a leading label and
/// the `sep` that follows it are removed, and the text is capped at
/// `max_words` words (generation that never emits `eos` is cut there).
pub fn parse_ar_output(
    raw: &str,
    task: &TaskSpec,
    markers: &ArMarkers,
    max_words: usize,
) -> (Option<String>, String) {
    let tokens: Vec<&str> = raw
        .split_whitespace()
        .take_while(|t| *t != markers.eos)
        .collect();
    let mut rest = tokens.as_slice();
    let mut label = None;
    if let Some(first) = rest.first() {
        let lower = first.to_lowercase();
        if task.contains(&lower) {
            label = Some(lower);
            rest = &rest[1..];
        }
    }
    if rest.first() == Some(&markers.sep.as_str()) {
        rest = &rest[1..];
    }
    let text = rest
        .iter()
        .take(max_words)
        .copied()
        .collect::<Vec<_>>()
        .join(" ");
    (label, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitKind;

    fn ex(label: &str, text: &str) -> LabeledExample {
        LabeledExample::new("0", label, text).unwrap()
    }

    #[test]
    fn prepend_examples() {
        assert_eq!(prepend_encode(&ex("positive", "a fun ride")), "positive a fun ride");
        assert_eq!(prepend_encode(&ex("getweather", "is it cold")), "getweather is it cold");
        assert!(LabeledExample::new("0", "negative", "").is_err());
    }

    #[test]
    fn strip_label_examples() {
        let task = TaskSpec::sst2();
        assert_eq!(
            strip_label("positive a fun ride", &task),
            (Some("positive".into()), "a fun ride".into())
        );
        assert_eq!(strip_label("a fun ride", &task), (None, "a fun ride".into()));
        assert_eq!(
            strip_label("Positive a fun ride", &task),
            (Some("positive".into()), "a fun ride".into())
        );
        assert_eq!(strip_label("NEGATIVE", &task), (Some("negative".into()), "".into()));
        assert_eq!(strip_label("", &task), (None, "".into()));
        // prefix of a token is not a label
        assert_eq!(strip_label("positively fine", &task), (None, "positively fine".into()));
    }

    #[test]
    fn ar_corpus_examples() {
        let task = TaskSpec::new("t", ["pos", "neg"]).unwrap();
        let split = DatasetSplit::new(
            task.clone(),
            SplitKind::Train,
            vec![
                LabeledExample::new("0", "pos", "a b").unwrap(),
                LabeledExample::new("1", "neg", "c").unwrap(),
            ],
        )
        .unwrap();
        let markers = ArMarkers::default();
        assert_eq!(ar_corpus_encode(&split, &markers), "pos SEP a b EOS neg SEP c EOS");
        assert_eq!(ar_corpus_encode(&DatasetSplit::empty(task, SplitKind::Train), &markers), "");
    }

    #[test]
    fn ar_prompt_examples() {
        let m = ArMarkers::default();
        assert_eq!(
            ar_prompt("negative", "the movie was long", 3, &m),
            "negative SEP the movie was"
        );
        assert_eq!(ar_prompt("negative", "the movie was long", 0, &m), "negative SEP");
        assert_eq!(ar_prompt("pos", "hi", 3, &m), "pos SEP hi");
    }

    #[test]
    fn marker_validation() {
        let task = TaskSpec::sst2();
        assert!(ArMarkers::default().validate(&task).is_ok());
        let same = ArMarkers { sep: "X".into(), eos: "X".into() };
        assert!(same.validate(&task).is_err());
        let inside = ArMarkers { sep: "pos".into(), eos: "EOS".into() };
        assert!(inside.validate(&task).is_err());
    }

    #[test]
    fn parse_ar_output_cuts_at_eos() {
        let task = TaskSpec::sst2();
        let m = ArMarkers::default();
        assert_eq!(
            parse_ar_output("negative SEP the movie was long EOS positive SEP", &task, &m, 64),
            (Some("negative".into()), "the movie was long".into())
        );
        assert_eq!(
            parse_ar_output("negative SEP a b c d", &task, &m, 2),
            (Some("negative".into()), "a b".into())
        );
        assert_eq!(parse_ar_output("just words", &task, &m, 64), (None, "just words".into()));
    }

    #[test]
    fn expand_registers_labels() {
        let task = TaskSpec::sst2();
        assert!(ConditioningMode::Prepend.added_tokens(&task).is_empty());
        assert_eq!(ConditioningMode::Expand.added_tokens(&task), vec!["positive", "negative"]);
    }
}
