//! Generator backends.
//!
//! A [`Generator`] is fine-tuned on a low-resource split and turns into a
//! [`TunedGenerator`], which synthesizes one [`GenerationRecord`] per call.
//! The toolkit ships a deterministic mock, EDA, a backtranslation adapter and
//! a [`PretrainedBackend`] that drives any [`TextModel`] (in-process, or an
//! external process speaking the JSON-lines protocol in [`external`]).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditioning::{ArMarkers, ConditioningError, ConditioningMode};
use crate::corpus::{DatasetSplit, LabeledExample, TaskSpec};
use crate::corruption::{CorruptionError, MaskPlan};

mod backtranslation;
mod eda;
pub mod external;
mod mock;
mod pretrained;

pub use backtranslation::{backtranslate, BacktranslationBackend, TranslationStage, Translator};
pub use eda::{apply_edit, eda_perturb, sample_edit, EdaBackend, EdaEdit, EdaOp, SynonymLexicon};
pub use external::ExternalProcess;
pub use mock::{
    mock_lexicon, mock_synthesize, mock_synthesize_from, MockBackend, MOCK_LEXICON_SIZE,
};
pub use pretrained::{
    build_model_input, EchoFillModel, FineTuneRequest, PretrainedBackend, SynthesizeRequest,
    TextModel, WireExample,
};

pub const DEFAULT_RETRIES: u32 = 3;
pub const DEFAULT_MAX_LENGTH: usize = 64;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: could not start `{command}`: {reason}")]
    Unavailable { command: String, reason: String },
    #[error("backend protocol error during {op}: {message}")]
    Protocol { op: String, message: String },
    #[error("backend reported failure during {op}: {message}")]
    Remote { op: String, message: String },
    #[error("translator failed at {stage} stage: {message}")]
    Translator {
        stage: TranslationStage,
        message: String,
    },
    #[error("generation produced no text for example {source_id:?}")]
    EmptyGeneration { source_id: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("training and dev splits belong to different tasks ({0} vs {1})")]
    TaskMismatch(String, String),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
}

impl BackendError {
    /// Failures that drop one record instead of aborting the run.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            BackendError::EmptyGeneration { .. } | BackendError::Corruption(CorruptionError::EmptyInput)
        )
    }
}

/// Augmentation method, which fixes how inputs are built and outputs decoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AePrepend,
    AeExpand,
    Ar,
    ArContext,
    S2sWord,
    S2sSpan,
    Eda,
    Backtranslation,
    Mock,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::AePrepend,
        Method::AeExpand,
        Method::Ar,
        Method::ArContext,
        Method::S2sWord,
        Method::S2sSpan,
        Method::Eda,
        Method::Backtranslation,
        Method::Mock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::AePrepend => "ae_prepend",
            Method::AeExpand => "ae_expand",
            Method::Ar => "ar",
            Method::ArContext => "ar_context",
            Method::S2sWord => "s2s_word",
            Method::S2sSpan => "s2s_span",
            Method::Eda => "eda",
            Method::Backtranslation => "backtranslation",
            Method::Mock => "mock",
        }
    }

    pub fn is_ar(self) -> bool {
        matches!(self, Method::Ar | Method::ArContext)
    }

    pub fn is_s2s(self) -> bool {
        matches!(self, Method::S2sWord | Method::S2sSpan)
    }

    pub fn is_ae(self) -> bool {
        matches!(self, Method::AePrepend | Method::AeExpand)
    }

    /// Methods that need no fine-tuning step.
    pub fn is_tune_free(self) -> bool {
        matches!(self, Method::Eda | Method::Backtranslation | Method::Mock)
    }

    /// Methods backed by a pre-trained model adapter.
    pub fn needs_model(self) -> bool {
        self.is_ae() || self.is_ar() || self.is_s2s() || self == Method::Backtranslation
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BackendError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStrategy {
    Nucleus,
    Beam,
    Deterministic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: DecodeStrategy,
    pub top_p: f64,
    pub top_k: u32,
    pub beam_size: u32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: DecodeStrategy::Deterministic,
            top_p: 0.9,
            top_k: 0,
            beam_size: 5,
        }
    }
}

impl DecodeConfig {
    pub fn nucleus() -> Self {
        Self {
            strategy: DecodeStrategy::Nucleus,
            ..Self::default()
        }
    }

    pub fn beam() -> Self {
        Self {
            strategy: DecodeStrategy::Beam,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.strategy {
            DecodeStrategy::Nucleus if !(self.top_p > 0.0 && self.top_p <= 1.0) => Err(
                BackendError::Config(format!("top_p {} outside (0, 1]", self.top_p)),
            ),
            DecodeStrategy::Beam if self.beam_size == 0 => {
                Err(BackendError::Config("beam_size must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneSelection {
    #[default]
    DevLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    /// Label smoothing of the reconstruction loss; zero outside seq2seq.
    pub label_smoothing: f64,
    pub selection: TuneSelection,
}

impl TuneConfig {
    pub fn new(epochs: u32, learning_rate: f64) -> Self {
        Self {
            epochs,
            learning_rate,
            label_smoothing: 0.0,
            selection: TuneSelection::DevLoss,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.epochs == 0 || self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(BackendError::Config(
                "tune epochs and learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(BackendError::Config(format!(
                "label_smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        Ok(())
    }
}

/// Fine-tuning and decoding settings for one generator backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartialBackendConfig")]
pub struct BackendConfig {
    pub method: Method,
    pub conditioning: ConditioningMode,
    pub mask_plan: Option<MaskPlan>,
    pub k_context: usize,
    pub markers: Option<ArMarkers>,
    pub decode: DecodeConfig,
    pub tune: TuneConfig,
    /// Word cap for auto-regressive output that never emits EOS.
    pub max_length: usize,
    /// Extra attempts after a generation comes back empty.
    pub retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_cmd: Option<String>,
}

impl BackendConfig {
    /// Defaults for each method.
    pub fn for_method(method: Method) -> Self {
        let base = Self {
            method,
            conditioning: ConditioningMode::Prepend,
            mask_plan: None,
            k_context: 0,
            markers: None,
            decode: DecodeConfig::default(),
            tune: TuneConfig::new(1, 1e-5),
            max_length: DEFAULT_MAX_LENGTH,
            retries: DEFAULT_RETRIES,
            backend_cmd: None,
        };
        match method {
            Method::AePrepend => Self {
                mask_plan: Some(MaskPlan::mlm()),
                tune: TuneConfig::new(10, 4e-5),
                ..base
            },
            Method::AeExpand => Self {
                conditioning: ConditioningMode::Expand,
                mask_plan: Some(MaskPlan::mlm()),
                tune: TuneConfig::new(150, 1.5e-4),
                ..base
            },
            Method::Ar | Method::ArContext => Self {
                k_context: if method == Method::ArContext { 3 } else { 0 },
                markers: Some(ArMarkers::default()),
                decode: DecodeConfig::nucleus(),
                // stock language-model fine-tuning defaults
                tune: TuneConfig::new(3, 5e-5),
                ..base
            },
            Method::S2sWord | Method::S2sSpan => Self {
                mask_plan: Some(if method == Method::S2sWord {
                    MaskPlan::word()
                } else {
                    MaskPlan::span()
                }),
                decode: DecodeConfig::beam(),
                tune: TuneConfig {
                    label_smoothing: 0.1,
                    ..TuneConfig::new(10, 1e-5)
                },
                ..base
            },
            Method::Eda | Method::Backtranslation | Method::Mock => base,
        }
    }

    pub fn validate(&self, task: &TaskSpec) -> Result<(), BackendError> {
        if self.method.is_s2s() && self.mask_plan.is_none() {
            return Err(BackendError::Config(format!(
                "{} requires a mask_plan",
                self.method
            )));
        }
        if self.method.is_ar() {
            let markers = self.markers.as_ref().ok_or_else(|| {
                BackendError::Config(format!("{} requires markers", self.method))
            })?;
            markers.validate(task)?;
        }
        if let Some(plan) = &self.mask_plan {
            plan.validate()?;
        }
        if self.max_length == 0 {
            return Err(BackendError::Config("max_length must be positive".into()));
        }
        self.decode.validate()?;
        self.tune.validate()
    }
}

/// Config as written by users: everything but `method` falls back to
/// [`BackendConfig::for_method`].
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialBackendConfig {
    method: Method,
    conditioning: Option<ConditioningMode>,
    mask_plan: Option<MaskPlan>,
    k_context: Option<usize>,
    markers: Option<ArMarkers>,
    decode: Option<DecodeConfig>,
    tune: Option<TuneConfig>,
    max_length: Option<usize>,
    retries: Option<u32>,
    backend_cmd: Option<String>,
}

impl TryFrom<PartialBackendConfig> for BackendConfig {
    type Error = BackendError;

    fn try_from(p: PartialBackendConfig) -> Result<Self, Self::Error> {
        let d = BackendConfig::for_method(p.method);
        Ok(BackendConfig {
            method: p.method,
            conditioning: p.conditioning.unwrap_or(d.conditioning),
            mask_plan: p.mask_plan.or(d.mask_plan),
            k_context: p.k_context.unwrap_or(d.k_context),
            markers: p.markers.or(d.markers),
            decode: p.decode.unwrap_or(d.decode),
            tune: p.tune.unwrap_or(d.tune),
            max_length: p.max_length.unwrap_or(d.max_length),
            retries: p.retries.unwrap_or(d.retries),
            backend_cmd: p.backend_cmd,
        })
    }
}

/// One synthetic example with its provenance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub source_id: String,
    pub method: String,
    pub label_assigned: String,
    pub text: String,
    pub raw_output: String,
    pub label_emitted: Option<String>,
    pub label_match: bool,
    pub seed: u64,
    /// Set on attempts that produced no usable example.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationRecord {
    pub fn new(
        source: &LabeledExample,
        method: Method,
        raw_output: String,
        label_emitted: Option<String>,
        text: String,
        seed: u64,
    ) -> Self {
        let label_match = label_emitted.as_deref() == Some(source.label());
        Self {
            source_id: source.id().to_string(),
            method: method.as_str().to_string(),
            label_assigned: source.label().to_string(),
            text,
            raw_output,
            label_emitted,
            label_match,
            seed,
            error: None,
        }
    }

    /// Record of an attempt that was dropped.
    pub fn failed(source: &LabeledExample, method: Method, seed: u64, error: &BackendError) -> Self {
        Self {
            source_id: source.id().to_string(),
            method: method.as_str().to_string(),
            label_assigned: source.label().to_string(),
            text: String::new(),
            raw_output: String::new(),
            label_emitted: None,
            label_match: false,
            seed,
            error: Some(error.to_string()),
        }
    }

    pub fn is_success(&self) -> bool {
        self.error.is_none()
    }
}

/// A backend before fine-tuning.
pub trait Generator: Send {
    fn method(&self) -> Method;

    /// Fine-tunes on `train`, selecting on `dev`. Tune-free backends return
    /// immediately.
    fn fine_tune(
        self: Box<Self>,
        train: &DatasetSplit,
        dev: &DatasetSplit,
    ) -> Result<Box<dyn TunedGenerator>, BackendError>;
}

/// A backend ready to synthesize. One handle serves one task at a time.
pub trait TunedGenerator: Send {
    fn method(&self) -> Method;

    /// Synthesizes one example for `example`; the record's assigned label is
    /// always the source label.
    fn synthesize(
        &mut self,
        example: &LabeledExample,
        seed: u64,
    ) -> Result<GenerationRecord, BackendError>;

    fn retries(&self) -> u32 {
        DEFAULT_RETRIES
    }

    /// An independent handle for parallel generation, when the backend is
    /// stateless.
    fn try_clone(&self) -> Option<Box<dyn TunedGenerator>> {
        None
    }
}

/// Checks the splits share a task, then fine-tunes.
pub fn fine_tune(
    backend: Box<dyn Generator>,
    train: &DatasetSplit,
    dev: &DatasetSplit,
) -> Result<Box<dyn TunedGenerator>, BackendError> {
    if train.task() != dev.task() {
        return Err(BackendError::TaskMismatch(
            train.task().name().into(),
            dev.task().name().into(),
        ));
    }
    backend.fine_tune(train, dev)
}

/// In-process resources a config file cannot carry.
#[derive(Clone, Default)]
pub struct BackendResources {
    pub lexicon: Option<Arc<SynonymLexicon>>,
    /// Translator pair for in-process backtranslation.
    pub translators: Option<(Arc<dyn Translator>, Arc<dyn Translator>)>,
}

/// Builds the backend a config names. Model-backed methods need either an
/// in-process translator pair (backtranslation) or `backend_cmd`.
pub fn build_backend(
    config: &BackendConfig,
    task: &TaskSpec,
    resources: &BackendResources,
) -> Result<Box<dyn Generator>, BackendError> {
    config.validate(task)?;
    match config.method {
        Method::Mock => Ok(Box::new(MockBackend::new(task.clone()))),
        Method::Eda => Ok(Box::new(EdaBackend::new(resources.lexicon.clone()))),
        Method::Backtranslation if resources.translators.is_some() => {
            let (fwd, bwd) = resources.translators.clone().expect("checked");
            Ok(Box::new(BacktranslationBackend::new(fwd, bwd)))
        }
        method => {
            let cmd = config.backend_cmd.as_deref().ok_or_else(|| {
                BackendError::Config(format!("method {method} requires backend_cmd"))
            })?;
            let process = ExternalProcess::spawn(cmd)?;
            Ok(Box::new(PretrainedBackend::new(
                config.clone(),
                task.clone(),
                Box::new(process),
            )?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_defaults() {
        let ae = BackendConfig::for_method(Method::AePrepend);
        assert_eq!(ae.tune.epochs, 10);
        assert_eq!(ae.tune.learning_rate, 4e-5);
        let ex = BackendConfig::for_method(Method::AeExpand);
        assert_eq!(ex.tune.epochs, 150);
        assert_eq!(ex.tune.learning_rate, 1.5e-4);
        assert_eq!(ex.conditioning, ConditioningMode::Expand);
        let ar = BackendConfig::for_method(Method::ArContext);
        assert_eq!(ar.k_context, 3);
        assert_eq!(ar.decode.strategy, DecodeStrategy::Nucleus);
        assert_eq!(ar.decode.top_p, 0.9);
        assert_eq!(ar.decode.top_k, 0);
        assert_eq!(BackendConfig::for_method(Method::Ar).k_context, 0);
        let s2s = BackendConfig::for_method(Method::S2sSpan);
        assert_eq!(s2s.decode.beam_size, 5);
        assert_eq!(s2s.tune.learning_rate, 1e-5);
        assert_eq!(s2s.tune.label_smoothing, 0.1);
        assert_eq!(s2s.mask_plan.unwrap().rate, 0.4);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: BackendConfig =
            serde_json::from_str(r#"{"method":"s2s_word","backend_cmd":"x"}"#).unwrap();
        assert_eq!(cfg.mask_plan, Some(MaskPlan::word()));
        assert_eq!(cfg.backend_cmd.as_deref(), Some("x"));
        let back: BackendConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<BackendConfig>(r#"{"method":"nope"}"#).is_err());
    }

    #[test]
    fn validation() {
        let task = TaskSpec::sst2();
        let mut cfg = BackendConfig::for_method(Method::S2sWord);
        cfg.mask_plan = None;
        assert!(cfg.validate(&task).is_err());
        let mut cfg = BackendConfig::for_method(Method::Ar);
        cfg.markers = None;
        assert!(cfg.validate(&task).is_err());
        let mut cfg = BackendConfig::for_method(Method::Ar);
        cfg.decode.top_p = 0.0;
        assert!(cfg.validate(&task).is_err());
        for m in Method::ALL {
            assert!(BackendConfig::for_method(m).validate(&task).is_ok(), "{m}");
        }
    }

    #[test]
    fn record_label_match() {
        let ex = LabeledExample::new("3", "positive", "a fun ride").unwrap();
        let r = GenerationRecord::new(&ex, Method::Mock, "x".into(), Some("positive".into()), "x".into(), 1);
        assert!(r.label_match);
        let r = GenerationRecord::new(&ex, Method::Mock, "x".into(), Some("negative".into()), "x".into(), 1);
        assert!(!r.label_match);
        let r = GenerationRecord::new(&ex, Method::Eda, "x".into(), None, "x".into(), 1);
        assert!(!r.label_match);
        let json = serde_json::to_value(&r).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["label_assigned", "label_emitted", "label_match", "method", "raw_output", "seed", "source_id", "text"]
        );
    }

    #[test]
    fn model_methods_need_command() {
        let task = TaskSpec::sst2();
        let cfg = BackendConfig::for_method(Method::S2sSpan);
        let err = build_backend(&cfg, &task, &BackendResources::default()).err().unwrap();
        assert!(matches!(err, BackendError::Config(_)));
    }

    #[test]
    fn missing_binary_names_command() {
        let task = TaskSpec::sst2();
        let mut cfg = BackendConfig::for_method(Method::S2sSpan);
        cfg.backend_cmd = Some("/definitely/not/here --flag".into());
        match build_backend(&cfg, &task, &BackendResources::default()) {
            Err(BackendError::Unavailable { command, .. }) => {
                assert!(command.contains("/definitely/not/here"))
            }
            other => panic!("unexpected {:?}", other.err()),
        }
    }
}
