//! Small synthetic corpora for demos and tests.
//!
//! Toy texts are a few words from a shared noise pool plus one cue word from
//! the class's mock lexicon ([`mock_lexicon`]). The cue alone decides the
//! class, so the data is linearly separable, but a handful of examples per
//! class only covers part of each cue vocabulary.

use rand::Rng;

use crate::backends::mock_lexicon;
use crate::corpus::{DatasetSplit, LabeledExample, SplitKind, TaskSpec};
use crate::experiment::ExperimentData;
use crate::seed;

const NOISE: [&str; 40] = [
    "the", "a", "an", "this", "that", "it", "was", "is", "very", "quite", "rather", "some",
    "movie", "film", "story", "plot", "scene", "actor", "cast", "music", "ending", "start",
    "long", "short", "old", "new", "really", "just", "so", "too", "with", "without", "about",
    "into", "over", "under", "then", "now", "again", "still",
];

pub fn toy_task() -> TaskSpec {
    TaskSpec::new("toy", ["alpha", "beta"]).expect("static task")
}

/// `per_class` examples for every label of `task`, interleaved by class.
pub fn separable_split(task: &TaskSpec, per_class: usize, kind: SplitKind, seed: u64) -> DatasetSplit {
    let mut rng = seed::rng_from_seed(seed);
    let lexicons: Vec<Vec<String>> = task.labels().iter().map(|l| mock_lexicon(l)).collect();
    let mut examples = Vec::with_capacity(per_class * task.labels().len());
    for i in 0..per_class {
        for (c, label) in task.labels().iter().enumerate() {
            let len = rng.gen_range(4..=6);
            let mut words: Vec<&str> = (0..len).map(|_| NOISE[rng.gen_range(0..NOISE.len())]).collect();
            let cue = &lexicons[c][rng.gen_range(0..lexicons[c].len())];
            words.insert(rng.gen_range(0..=len), cue);
            let id = (i * task.labels().len() + c).to_string();
            examples.push(LabeledExample::new(id, label.as_str(), words.join(" ")).expect("valid toy text"));
        }
    }
    DatasetSplit::new(task.clone(), kind, examples).expect("valid toy split")
}

/// Training pool of `train_per_class` and test split of `test_per_class`
/// examples per class over [`toy_task`].
pub fn toy_experiment_data(train_per_class: usize, test_per_class: usize, seed: u64) -> ExperimentData {
    let task = toy_task();
    ExperimentData {
        train: separable_split(&task, train_per_class, SplitKind::Train, seed::mix(seed, &[0])),
        test: separable_split(&task, test_per_class, SplitKind::Test, seed::mix(seed, &[1])),
    }
}
