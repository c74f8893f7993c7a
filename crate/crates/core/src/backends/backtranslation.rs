//! Round-trip translation over two opaque translator handles.

use std::fmt;
use std::sync::Arc;

use super::{BackendError, GenerationRecord, Generator, Method, TunedGenerator};
use crate::corpus::{DatasetSplit, LabeledExample};

/// A string-to-string translation function.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str) -> Result<String, String>;
}

impl<F> Translator for F
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    fn translate(&self, text: &str) -> Result<String, String> {
        self(text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TranslationStage {
    Forward,
    Backward,
}

impl fmt::Display for TranslationStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TranslationStage::Forward => "fwd",
            TranslationStage::Backward => "bwd",
        })
    }
}

/// `bwd(fwd(text))`.
pub fn backtranslate(
    text: &str,
    fwd: &dyn Translator,
    bwd: &dyn Translator,
) -> Result<String, BackendError> {
    let pivot = fwd.translate(text).map_err(|message| BackendError::Translator {
        stage: TranslationStage::Forward,
        message,
    })?;
    bwd.translate(&pivot)
        .map_err(|message| BackendError::Translator {
            stage: TranslationStage::Backward,
            message,
        })
}

#[derive(Clone)]
pub struct BacktranslationBackend {
    fwd: Arc<dyn Translator>,
    bwd: Arc<dyn Translator>,
}

impl BacktranslationBackend {
    pub fn new(fwd: Arc<dyn Translator>, bwd: Arc<dyn Translator>) -> Self {
        Self { fwd, bwd }
    }
}

impl Generator for BacktranslationBackend {
    fn method(&self) -> Method {
        Method::Backtranslation
    }

    fn fine_tune(
        self: Box<Self>,
        _train: &DatasetSplit,
        _dev: &DatasetSplit,
    ) -> Result<Box<dyn TunedGenerator>, BackendError> {
        Ok(self)
    }
}

impl TunedGenerator for BacktranslationBackend {
    fn method(&self) -> Method {
        Method::Backtranslation
    }

    fn synthesize(
        &mut self,
        example: &LabeledExample,
        seed: u64,
    ) -> Result<GenerationRecord, BackendError> {
        let raw = backtranslate(example.text(), self.fwd.as_ref(), self.bwd.as_ref())?;
        let text = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(BackendError::EmptyGeneration {
                source_id: example.id().into(),
            });
        }
        Ok(GenerationRecord::new(
            example,
            Method::Backtranslation,
            raw,
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

    fn identity(s: &str) -> Result<String, String> {
        Ok(s.to_string())
    }

    #[test]
    fn identity_round_trip() {
        assert_eq!(backtranslate("a fun ride", &identity, &identity).unwrap(), "a fun ride");
    }

    #[test]
    fn composes_in_order() {
        let up = |s: &str| Ok::<_, String>(s.to_uppercase());
        let low = |s: &str| Ok::<_, String>(s.to_lowercase());
        assert_eq!(backtranslate("A Fun Ride", &up, &low).unwrap(), "a fun ride");
        let exclaim = |s: &str| Ok::<_, String>(format!("{s}!"));
        assert_eq!(backtranslate("x", &up, &exclaim).unwrap(), "X!");
    }

    #[test]
    fn failures_carry_stage() {
        let fail = |_: &str| Err::<String, _>("model offline".to_string());
        match backtranslate("x", &fail, &identity) {
            Err(BackendError::Translator { stage, message }) => {
                assert_eq!(stage, TranslationStage::Forward);
                assert_eq!(message, "model offline");
            }
            other => panic!("{other:?}"),
        }
        let err = backtranslate("x", &identity, &fail).unwrap_err();
        assert!(err.to_string().contains("bwd"), "{err}");
    }
}
