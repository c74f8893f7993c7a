//! Adapter that turns any pre-trained text model into a generator backend.
//!
//! The adapter owns everything method specific: it builds the label-prefixed
//! masked input (autoencoder and seq2seq), the `label SEP w_1..w_k` prompt
//! (auto-regressive) or passes the raw text (backtranslation), and decodes
//! the model's output back into `(label, text)`. The model itself only sees
//! [`FineTuneRequest`] and [`SynthesizeRequest`] values, which are also the
//! wire messages of the external-process protocol.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendError, DecodeConfig, GenerationRecord, Generator, Method, TunedGenerator};
use crate::conditioning::{self, ArMarkers};
use crate::corpus::{DatasetSplit, LabeledExample, TaskSpec};
use crate::corruption::{self, MaskPlan, DEFAULT_MASK_TOKEN};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireExample {
    pub label: String,
    pub text: String,
}

impl From<&LabeledExample> for WireExample {
    fn from(ex: &LabeledExample) -> Self {
        Self {
            label: ex.label().into(),
            text: ex.text().into(),
        }
    }
}

/// Body of the `fine_tune` message.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FineTuneRequest {
    pub train: Vec<WireExample>,
    pub dev: Vec<WireExample>,
    pub config: BackendConfig,
    /// Training sequences with conditioning applied, in `train` order.
    pub encoded: Vec<String>,
    /// Labels to register as single new tokens (expand conditioning only).
    pub added_tokens: Vec<String>,
}

/// Body of the `synthesize` message.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesizeRequest {
    pub input: String,
    pub decode: DecodeConfig,
    pub seed: u64,
}

/// A pre-trained model reachable in-process or over the stdio protocol.
pub trait TextModel: Send {
    fn fine_tune(&mut self, request: &FineTuneRequest) -> Result<(), BackendError>;
    fn generate(&mut self, request: &SynthesizeRequest) -> Result<String, BackendError>;
}

pub struct PretrainedBackend {
    config: BackendConfig,
    task: TaskSpec,
    model: Box<dyn TextModel>,
}

impl PretrainedBackend {
    pub fn new(
        config: BackendConfig,
        task: TaskSpec,
        model: Box<dyn TextModel>,
    ) -> Result<Self, BackendError> {
        if !config.method.needs_model() {
            return Err(BackendError::Config(format!(
                "method {} does not use a pre-trained model",
                config.method
            )));
        }
        config.validate(&task)?;
        Ok(Self {
            config,
            task,
            model,
        })
    }

    fn fine_tune_request(&self, train: &DatasetSplit, dev: &DatasetSplit) -> FineTuneRequest {
        let encoded = train
            .iter()
            .map(|ex| match &self.config.markers {
                Some(markers) if self.config.method.is_ar() => {
                    conditioning::ar_encode_example(ex, markers)
                }
                _ => conditioning::prepend_encode(ex),
            })
            .collect();
        FineTuneRequest {
            train: train.iter().map(WireExample::from).collect(),
            dev: dev.iter().map(WireExample::from).collect(),
            config: self.config.clone(),
            encoded,
            added_tokens: self.config.conditioning.added_tokens(&self.task),
        }
    }
}

impl Generator for PretrainedBackend {
    fn method(&self) -> Method {
        self.config.method
    }

    fn fine_tune(
        mut self: Box<Self>,
        train: &DatasetSplit,
        dev: &DatasetSplit,
    ) -> Result<Box<dyn TunedGenerator>, BackendError> {
        if !self.config.method.is_tune_free() {
            let request = self.fine_tune_request(train, dev);
            self.model.fine_tune(&request)?;
        }
        Ok(Box::new(TunedModel {
            config: self.config,
            task: self.task,
            model: self.model,
        }))
    }
}

struct TunedModel {
    config: BackendConfig,
    task: TaskSpec,
    model: Box<dyn TextModel>,
}

/// The string a model receives for `example` under `config`.
///
/// The label token is never masked: corruption applies to the text words
/// only, and the label is put in front afterwards.
pub fn build_model_input<R: Rng + ?Sized>(
    config: &BackendConfig,
    example: &LabeledExample,
    rng: &mut R,
) -> Result<String, BackendError> {
    let method = config.method;
    if method.is_ar() {
        let markers = config.markers.clone().unwrap_or_default();
        return Ok(conditioning::ar_prompt(
            example.label(),
            example.text(),
            config.k_context,
            &markers,
        ));
    }
    if method.is_ae() || method.is_s2s() {
        let plan = config.mask_plan.clone().unwrap_or_else(MaskPlan::mlm);
        let corrupted = corruption::corrupt(&example.words(), &plan, rng)?;
        return Ok(format!("{} {}", example.label(), corrupted.corrupted_text()));
    }
    Ok(example.text().to_string())
}

impl TunedGenerator for TunedModel {
    fn method(&self) -> Method {
        self.config.method
    }

    fn retries(&self) -> u32 {
        self.config.retries
    }

    fn synthesize(
        &mut self,
        example: &LabeledExample,
        seed: u64,
    ) -> Result<GenerationRecord, BackendError> {
        let mut rng = seed::rng_from_seed(seed);
        let input = build_model_input(&self.config, example, &mut rng)?;
        let raw = self.model.generate(&SynthesizeRequest {
            input,
            decode: self.config.decode.clone(),
            seed,
        })?;
        let (label_emitted, text) = if self.config.method.is_ar() {
            let markers = self.config.markers.clone().unwrap_or_default();
            conditioning::parse_ar_output(&raw, &self.task, &markers, self.config.max_length)
        } else if self.config.method == Method::Backtranslation {
            (None, raw.clone())
        } else {
            conditioning::strip_label(&raw, &self.task)
        };
        let text = conditioning::words(&text).join(" ");
        if text.is_empty() {
            return Err(BackendError::EmptyGeneration {
                source_id: example.id().into(),
            });
        }
        Ok(GenerationRecord::new(
            example,
            self.config.method,
            raw,
            label_emitted,
            text,
            seed,
        ))
    }
}

/// Deterministic in-process test decoder.
///
/// Fine-tuning records the vocabulary of each label. Generation echoes the
/// input, fills every mask token with a seeded draw from the input label's
/// vocabulary, and completes auto-regressive prompts (`label SEP ...`) with
/// `continuation` such words followed by the end marker.
#[derive(Clone, Debug)]
pub struct EchoFillModel {
    vocab: BTreeMap<String, Vec<String>>,
    mask_token: String,
    markers: ArMarkers,
    continuation: usize,
    tuned: bool,
}

impl Default for EchoFillModel {
    fn default() -> Self {
        Self {
            vocab: BTreeMap::new(),
            mask_token: DEFAULT_MASK_TOKEN.into(),
            markers: ArMarkers::default(),
            continuation: 4,
            tuned: false,
        }
    }
}

impl EchoFillModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_continuation(mut self, words: usize) -> Self {
        self.continuation = words;
        self
    }

    fn draw<R: Rng>(&self, label: Option<&str>, rng: &mut R) -> String {
        let pool = label
            .and_then(|l| self.vocab.get(l))
            .filter(|v| !v.is_empty());
        match pool {
            Some(words) => words[rng.gen_range(0..words.len())].clone(),
            None => "filler".into(),
        }
    }
}

impl TextModel for EchoFillModel {
    fn fine_tune(&mut self, request: &FineTuneRequest) -> Result<(), BackendError> {
        let mut vocab: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for ex in &request.train {
            vocab
                .entry(ex.label.clone())
                .or_default()
                .extend(ex.text.split_whitespace().map(String::from));
        }
        self.vocab = vocab
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        if let Some(plan) = &request.config.mask_plan {
            self.mask_token = plan.mask_token.clone();
        }
        if let Some(markers) = &request.config.markers {
            self.markers = markers.clone();
        }
        self.tuned = true;
        Ok(())
    }

    fn generate(&mut self, request: &SynthesizeRequest) -> Result<String, BackendError> {
        if !self.tuned {
            return Err(BackendError::Protocol {
                op: "synthesize".into(),
                message: "model has not been fine-tuned".into(),
            });
        }
        let mut rng = seed::rng_from_seed(request.seed);
        let tokens: Vec<&str> = request.input.split_whitespace().collect();
        let label = tokens
            .first()
            .copied()
            .filter(|t| self.vocab.contains_key(*t));
        let mut out: Vec<String> = Vec::with_capacity(tokens.len() + self.continuation + 1);
        for tok in &tokens {
            if *tok == self.mask_token {
                out.push(self.draw(label, &mut rng));
            } else {
                out.push((*tok).to_string());
            }
        }
        if tokens.get(1) == Some(&self.markers.sep.as_str()) {
            for _ in 0..self.continuation {
                out.push(self.draw(label, &mut rng));
            }
            out.push(self.markers.eos.clone());
        }
        Ok(out.join(" "))
    }
}
