//! Seeded word-level corruption for denoising inputs.
//!
//! The number of corrupted words is `max(1, round_half_up(rate * m))`, capped
//! at `m`, for a sequence of `m` words.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorruptionError {
    #[error("cannot corrupt an empty token list")]
    EmptyInput,
    #[error("mask rate {0} outside (0, 1]")]
    InvalidRate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScheme {
    /// Independent words, each replaced by its own mask token.
    Word,
    /// One contiguous run of words collapsed into a single mask token.
    Span,
    /// Masked-LM style word masking at the autoencoder's default rate.
    Mlm,
}

pub const DEFAULT_MASK_TOKEN: &str = "<mask>";
pub const DENOISING_RATE: f64 = 0.40;
pub const MLM_RATE: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub scheme: MaskScheme,
    pub rate: f64,
    pub mask_token: String,
}

impl MaskPlan {
    pub fn word() -> Self {
        Self::new(MaskScheme::Word, DENOISING_RATE)
    }

    pub fn span() -> Self {
        Self::new(MaskScheme::Span, DENOISING_RATE)
    }

    pub fn mlm() -> Self {
        Self::new(MaskScheme::Mlm, MLM_RATE)
    }

    fn new(scheme: MaskScheme, rate: f64) -> Self {
        Self {
            scheme,
            rate,
            mask_token: DEFAULT_MASK_TOKEN.into(),
        }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    pub fn with_mask_token(mut self, token: impl Into<String>) -> Self {
        self.mask_token = token.into();
        self
    }

    pub fn validate(&self) -> Result<(), CorruptionError> {
        if self.rate > 0.0 && self.rate <= 1.0 {
            Ok(())
        } else {
            Err(CorruptionError::InvalidRate(self.rate))
        }
    }
}

/// Number of words to corrupt in an `m`-word sequence.
pub fn mask_count(m: usize, rate: f64) -> usize {
    // the epsilon absorbs representation error such as 0.15 * 10 = 1.4999..
    let rounded = (rate * m as f64 + 0.5 + 1e-9).floor() as usize;
    rounded.max(1).min(m)
}

/// A corrupted sequence plus everything needed to undo it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionResult {
    pub scheme: MaskScheme,
    pub original_tokens: Vec<String>,
    pub corrupted_tokens: Vec<String>,
    /// Strictly increasing indices into `original_tokens`.
    pub masked_positions: Vec<usize>,
}

impl CorruptionResult {
    pub fn corrupted_text(&self) -> String {
        self.corrupted_tokens.join(" ")
    }

    /// Rebuilds the original token list from the corrupted one.
    pub fn reconstruct(&self) -> Vec<String> {
        match self.scheme {
            MaskScheme::Word | MaskScheme::Mlm => {
                let mut out = self.corrupted_tokens.clone();
                for &p in &self.masked_positions {
                    out[p] = self.original_tokens[p].clone();
                }
                out
            }
            MaskScheme::Span => {
                let Some(&start) = self.masked_positions.first() else {
                    return self.corrupted_tokens.clone();
                };
                let end = start + self.masked_positions.len();
                let mut out = self.corrupted_tokens[..start].to_vec();
                out.extend_from_slice(&self.original_tokens[start..end]);
                out.extend_from_slice(&self.corrupted_tokens[start + 1..]);
                out
            }
        }
    }
}

/// Dispatches on `plan.scheme`.
pub fn corrupt<S: AsRef<str>, R: Rng + ?Sized>(
    tokens: &[S],
    plan: &MaskPlan,
    rng: &mut R,
) -> Result<CorruptionResult, CorruptionError> {
    match plan.scheme {
        MaskScheme::Word => mask_words(tokens, plan, rng),
        MaskScheme::Span => mask_span(tokens, plan, rng),
        MaskScheme::Mlm => mask_mlm(tokens, plan, rng),
    }
}

/// Replaces `mask_count(m, rate)` distinct, uniformly chosen words with the
/// mask token.
pub fn mask_words<S: AsRef<str>, R: Rng + ?Sized>(
    tokens: &[S],
    plan: &MaskPlan,
    rng: &mut R,
) -> Result<CorruptionResult, CorruptionError> {
    mask_independent(tokens, plan, MaskScheme::Word, rng)
}

/// Same contract as [`mask_words`]; the plan normally carries [`MLM_RATE`].
pub fn mask_mlm<S: AsRef<str>, R: Rng + ?Sized>(
    tokens: &[S],
    plan: &MaskPlan,
    rng: &mut R,
) -> Result<CorruptionResult, CorruptionError> {
    mask_independent(tokens, plan, MaskScheme::Mlm, rng)
}

fn mask_independent<S: AsRef<str>, R: Rng + ?Sized>(
    tokens: &[S],
    plan: &MaskPlan,
    scheme: MaskScheme,
    rng: &mut R,
) -> Result<CorruptionResult, CorruptionError> {
    plan.validate()?;
    if tokens.is_empty() {
        return Err(CorruptionError::EmptyInput);
    }
    let original: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let m = original.len();
    let mut positions = index::sample(rng, m, mask_count(m, plan.rate)).into_vec();
    positions.sort_unstable();
    let mut corrupted = original.clone();
    for &p in &positions {
        corrupted[p] = plan.mask_token.clone();
    }
    Ok(CorruptionResult {
        scheme,
        original_tokens: original,
        corrupted_tokens: corrupted,
        masked_positions: positions,
    })
}

/// Collapses one contiguous run of `mask_count(m, rate)` words, starting
/// uniformly in `[0, m - c]`, into a single mask token.
pub fn mask_span<S: AsRef<str>, R: Rng + ?Sized>(
    tokens: &[S],
    plan: &MaskPlan,
    rng: &mut R,
) -> Result<CorruptionResult, CorruptionError> {
    plan.validate()?;
    if tokens.is_empty() {
        return Err(CorruptionError::EmptyInput);
    }
    let original: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let m = original.len();
    let c = mask_count(m, plan.rate);
    let start = rng.gen_range(0..=m - c);
    let mut corrupted = Vec::with_capacity(m - c + 1);
    corrupted.extend_from_slice(&original[..start]);
    corrupted.push(plan.mask_token.clone());
    corrupted.extend_from_slice(&original[start + c..]);
    Ok(CorruptionResult {
        scheme: MaskScheme::Span,
        original_tokens: original,
        corrupted_tokens: corrupted,
        masked_positions: (start..start + c).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn toks(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn count_rule() {
        assert_eq!(mask_count(10, 0.4), 4);
        assert_eq!(mask_count(1, 0.4), 1);
        assert_eq!(mask_count(2, 0.4), 1);
        assert_eq!(mask_count(20, 0.15), 3);
        assert_eq!(mask_count(3, 0.15), 1);
        // half-up
        assert_eq!(mask_count(10, 0.15), 2);
        assert_eq!(mask_count(5, 0.5), 3);
        assert_eq!(mask_count(4, 1.0), 4);
    }

    #[test]
    fn word_masking_examples() {
        let plan = MaskPlan::word();
        let r = mask_words(&toks(10), &plan, &mut rng_from_seed(3)).unwrap();
        assert_eq!(r.masked_positions.len(), 4);
        assert_eq!(r.corrupted_tokens.len(), 10);
        assert_eq!(r.corrupted_tokens.iter().filter(|t| *t == "<mask>").count(), 4);
        let again = mask_words(&toks(10), &plan, &mut rng_from_seed(3)).unwrap();
        assert_eq!(r, again);

        let one = mask_words(&toks(1), &plan, &mut rng_from_seed(3)).unwrap();
        assert_eq!(one.masked_positions, vec![0]);
    }

    #[test]
    fn span_masking_examples() {
        let plan = MaskPlan::span();
        let r = mask_span(&toks(10), &plan, &mut rng_from_seed(5)).unwrap();
        assert_eq!(r.masked_positions.len(), 4);
        assert_eq!(r.corrupted_tokens.len(), 7);
        assert!(r.masked_positions[0] <= 6);
        assert_eq!(r.reconstruct(), toks(10));

        let short = mask_span(&toks(2), &plan, &mut rng_from_seed(5)).unwrap();
        assert_eq!(short.masked_positions.len(), 1);
        assert_eq!(short.corrupted_tokens.len(), 2);
    }

    #[test]
    fn mlm_examples() {
        let plan = MaskPlan::mlm();
        let r = mask_mlm(&toks(20), &plan, &mut rng_from_seed(9)).unwrap();
        assert_eq!(r.masked_positions.len(), 3);
        for (i, t) in r.corrupted_tokens.iter().enumerate() {
            if r.masked_positions.contains(&i) {
                assert_eq!(t, "<mask>");
            } else {
                assert_eq!(t, &r.original_tokens[i]);
            }
        }
        let r = mask_mlm(&toks(3), &plan, &mut rng_from_seed(9)).unwrap();
        assert_eq!(r.masked_positions.len(), 1);
    }

    #[test]
    fn empty_and_bad_rate_rejected() {
        let empty: Vec<String> = vec![];
        let mut rng = rng_from_seed(0);
        assert_eq!(mask_words(&empty, &MaskPlan::word(), &mut rng), Err(CorruptionError::EmptyInput));
        assert_eq!(mask_span(&empty, &MaskPlan::span(), &mut rng), Err(CorruptionError::EmptyInput));
        assert!(mask_words(&toks(3), &MaskPlan::word().with_rate(0.0), &mut rng).is_err());
        assert!(mask_words(&toks(3), &MaskPlan::word().with_rate(1.5), &mut rng).is_err());
    }
}
