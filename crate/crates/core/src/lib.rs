//! Label-conditioned text data augmentation.
//!
//! A generator backend is fine-tuned on a handful of labeled examples with
//! the class label prepended to each sequence, then asked for one new example
//! per training example. The synthetic data is scored intrinsically
//! (type-token ratio, semantic fidelity) and extrinsically (test accuracy of
//! a classifier trained on original plus synthetic data, over repeated seeded
//! trials).
//!
//! | module | contents |
//! |---|---|
//! | [`corpus`] | examples, label sets, TSV I/O, stratified subsampling |
//! | [`conditioning`] | label prefixing, auto-regressive streams and prompts |
//! | [`corruption`] | word, span and masked-LM corruption |
//! | [`backends`] | generator trait, mock, EDA, backtranslation, model adapters |
//! | [`augment`] | the augmentation loop and synthetic-set assembly |
//! | [`metrics`] | type-token ratio, classifiers, semantic fidelity |
//! | [`experiment`] | repeated trials, mean/std, report tables |
//! | [`cli`] | the `augtool` command line |

pub mod augment;
pub mod backends;
pub mod cli;
pub mod conditioning;
pub mod corpus;
pub mod corruption;
pub mod experiment;
pub mod fixtures;
pub mod metrics;
pub mod seed;

pub use augment::{merge_for_training, run_augmentation, AugmentationRun};
pub use backends::{BackendConfig, GenerationRecord, Generator, Method, TunedGenerator};
pub use corpus::{DatasetSplit, LabeledExample, SplitKind, TaskSpec};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
