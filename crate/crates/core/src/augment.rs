//! Builds the synthetic split from a tuned generator: `s` generations per
//! training example, each paired with its source label.

use std::io::{self, BufRead, Write};
use std::thread;

use thiserror::Error;

use crate::backends::{BackendError, GenerationRecord, TunedGenerator};
use crate::corpus::{CorpusError, DatasetSplit, LabeledExample, SplitKind};
use crate::seed;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("all {attempts} generation attempts failed; last error: {last_error}")]
    AllFailed { attempts: usize, last_error: String },
    #[error("generation aborted for example {source_id:?}: {source}")]
    Backend {
        source_id: String,
        #[source]
        source: BackendError,
    },
    #[error("cannot merge splits: {0}")]
    Merge(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Outcome of one augmentation pass.
#[derive(Clone, Debug)]
pub struct AugmentationRun {
    pub s: usize,
    /// One record per attempt, in source order then replica order.
    pub records: Vec<GenerationRecord>,
    /// Successful records only, ids `syn-<source_id>-<j>`.
    pub synthetic: DatasetSplit,
}

impl AugmentationRun {
    pub fn attempts(&self) -> usize {
        self.records.len()
    }

    /// Fraction of successful records whose emitted label equals the
    /// assigned one.
    pub fn label_match_rate(&self) -> f64 {
        label_match_rate(&self.records)
    }
}

pub fn label_match_rate(records: &[GenerationRecord]) -> f64 {
    let ok: Vec<_> = records.iter().filter(|r| r.is_success()).collect();
    if ok.is_empty() {
        return 0.0;
    }
    ok.iter().filter(|r| r.label_match).count() as f64 / ok.len() as f64
}

/// Seed of replica `j` of the `i`-th training example.
pub fn record_seed(master_seed: u64, i: usize, j: usize) -> u64 {
    seed::mix(master_seed, &[i as u64, j as u64])
}

fn attempt_seed(base: u64, attempt: u32) -> u64 {
    if attempt == 0 {
        base
    } else {
        seed::mix(base, &[u64::from(attempt)])
    }
}

/// Runs one generation with retries. Recoverable failures (empty output)
/// become a failed record; anything else aborts.
fn generate_one(
    handle: &mut dyn TunedGenerator,
    example: &LabeledExample,
    base_seed: u64,
) -> Result<GenerationRecord, AugmentError> {
    let mut last = None;
    for attempt in 0..=handle.retries() {
        let seed = attempt_seed(base_seed, attempt);
        match handle.synthesize(example, seed) {
            Ok(record) => return Ok(record),
            Err(e) if e.is_recoverable() => last = Some(e),
            Err(source) => {
                return Err(AugmentError::Backend {
                    source_id: example.id().into(),
                    source,
                })
            }
        }
    }
    let err = last.expect("at least one attempt");
    log::warn!("dropping generation for example {}: {err}", example.id());
    Ok(GenerationRecord::failed(example, handle.method(), base_seed, &err))
}

fn assemble(
    train: &DatasetSplit,
    s: usize,
    records: Vec<GenerationRecord>,
) -> Result<AugmentationRun, AugmentError> {
    let mut synthetic = Vec::with_capacity(records.len());
    let mut records = records;
    for (k, record) in records.iter_mut().enumerate() {
        if !record.is_success() {
            continue;
        }
        let j = k % s;
        let id = format!("syn-{}-{}", record.source_id, j);
        match LabeledExample::new(id, record.label_assigned.clone(), record.text.clone()) {
            Ok(ex) => synthetic.push(ex),
            Err(e) => {
                log::warn!("dropping generation for example {}: {e}", record.source_id);
                record.error = Some(e.to_string());
            }
        }
    }
    if !records.is_empty() && synthetic.is_empty() {
        let last_error = records
            .iter()
            .rev()
            .find_map(|r| r.error.clone())
            .unwrap_or_default();
        return Err(AugmentError::AllFailed {
            attempts: records.len(),
            last_error,
        });
    }
    Ok(AugmentationRun {
        s,
        records,
        synthetic: DatasetSplit::new(train.task().clone(), SplitKind::Synthetic, synthetic)?,
    })
}

/// Generates `s` synthetic examples per training example with one handle.
pub fn run_augmentation(
    handle: &mut dyn TunedGenerator,
    train: &DatasetSplit,
    s: usize,
    master_seed: u64,
) -> Result<AugmentationRun, AugmentError> {
    if s == 0 {
        return Err(AugmentError::InvalidArgument("s must be positive".into()));
    }
    let mut records = Vec::with_capacity(train.len() * s);
    for (i, example) in train.iter().enumerate() {
        for j in 0..s {
            records.push(generate_one(handle, example, record_seed(master_seed, i, j))?);
        }
    }
    assemble(train, s, records)
}

/// Same result as [`run_augmentation`], spread over one thread per handle.
/// Attempt `k` (in source-then-replica order) goes to handle `k % workers`.
pub fn run_augmentation_parallel(
    handles: &mut [Box<dyn TunedGenerator>],
    train: &DatasetSplit,
    s: usize,
    master_seed: u64,
) -> Result<AugmentationRun, AugmentError> {
    if s == 0 {
        return Err(AugmentError::InvalidArgument("s must be positive".into()));
    }
    if handles.is_empty() {
        return Err(AugmentError::InvalidArgument("no generator handles".into()));
    }
    let workers = handles.len();
    let total = train.len() * s;
    let examples = train.examples();
    let per_worker: Vec<Vec<(usize, Result<GenerationRecord, AugmentError>)>> =
        thread::scope(|scope| {
            let jobs: Vec<_> = handles
                .iter_mut()
                .enumerate()
                .map(|(w, handle)| {
                    scope.spawn(move || {
                        (w..total)
                            .step_by(workers)
                            .map(|k| {
                                let (i, j) = (k / s, k % s);
                                let out = generate_one(
                                    handle.as_mut(),
                                    &examples[i],
                                    record_seed(master_seed, i, j),
                                );
                                (k, out)
                            })
                            .collect()
                    })
                })
                .collect();
            jobs.into_iter()
                .map(|j| j.join().expect("augmentation worker panicked"))
                .collect()
        });
    let mut slots: Vec<Option<Result<GenerationRecord, AugmentError>>> =
        (0..total).map(|_| None).collect();
    for (k, out) in per_worker.into_iter().flatten() {
        slots[k] = Some(out);
    }
    let records = slots
        .into_iter()
        .map(|slot| slot.expect("every attempt assigned"))
        .collect::<Result<Vec<_>, _>>()?;
    assemble(train, s, records)
}

/// Originals first, then synthetic examples; ids must stay unique.
pub fn merge_for_training(
    train: &DatasetSplit,
    synthetic: &DatasetSplit,
) -> Result<DatasetSplit, AugmentError> {
    if train.task() != synthetic.task() {
        return Err(AugmentError::Merge(format!(
            "task {} differs from {}",
            train.task().name(),
            synthetic.task().name()
        )));
    }
    let mut examples = train.examples().to_vec();
    examples.extend_from_slice(synthetic.examples());
    DatasetSplit::new(train.task().clone(), SplitKind::Train, examples).map_err(|e| match e {
        CorpusError::DuplicateId(id) => AugmentError::Merge(format!("id collision on {id:?}")),
        other => AugmentError::Corpus(other),
    })
}

/// One JSON object per line.
pub fn write_records_jsonl<W: Write>(records: &[GenerationRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> io::Result<Vec<GenerationRecord>> {
    input
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|line| {
            let line = line?;
            serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{Method, MockBackend};
    use crate::corpus::TaskSpec;

    fn train(n: usize) -> DatasetSplit {
        let ex = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { "positive" } else { "negative" };
                LabeledExample::new(i.to_string(), label, format!("sample text number {i}")).unwrap()
            })
            .collect();
        DatasetSplit::new(TaskSpec::sst2(), SplitKind::Train, ex).unwrap()
    }

    /// Fails every attempt for odd source ids with an empty generation.
    struct Flaky {
        calls: usize,
    }

    impl TunedGenerator for Flaky {
        fn method(&self) -> Method {
            Method::Mock
        }

        fn synthesize(&mut self, ex: &LabeledExample, seed: u64) -> Result<GenerationRecord, BackendError> {
            self.calls += 1;
            if ex.id().parse::<usize>().unwrap() % 2 == 1 {
                return Err(BackendError::EmptyGeneration { source_id: ex.id().into() });
            }
            Ok(GenerationRecord::new(ex, Method::Mock, ex.text().into(), None, ex.text().into(), seed))
        }
    }

    #[test]
    fn cardinality() {
        let mut mock = MockBackend::new(TaskSpec::sst2());
        let run = run_augmentation(&mut mock, &train(20), 1, 5).unwrap();
        assert_eq!(run.synthetic.len(), 20);
        let run = run_augmentation(&mut mock, &train(20), 3, 5).unwrap();
        assert_eq!(run.synthetic.len(), 60);
        assert_eq!(run.synthetic.examples()[1].id(), "syn-0-1");
        assert_eq!(run.synthetic.kind(), SplitKind::Synthetic);
    }

    #[test]
    fn partial_failures_are_dropped_after_retries() {
        let mut flaky = Flaky { calls: 0 };
        let run = run_augmentation(&mut flaky, &train(4), 1, 0).unwrap();
        assert_eq!(run.attempts(), 4);
        assert_eq!(run.synthetic.len(), 2);
        // 2 good + 2 bad * (1 + 3 retries)
        assert_eq!(flaky.calls, 10);
        assert!(run.records[1].error.is_some());
    }

    #[test]
    fn all_failed_is_error() {
        let only_odd = DatasetSplit::new(
            TaskSpec::sst2(),
            SplitKind::Train,
            vec![LabeledExample::new("1", "positive", "x").unwrap()],
        )
        .unwrap();
        let err = run_augmentation(&mut Flaky { calls: 0 }, &only_odd, 1, 0).unwrap_err();
        assert!(matches!(err, AugmentError::AllFailed { attempts: 1, .. }));
    }

    #[test]
    fn merge_rules() {
        let t = train(20);
        let mut mock = MockBackend::new(TaskSpec::sst2());
        let syn = run_augmentation(&mut mock, &t, 1, 1).unwrap().synthetic;
        let merged = merge_for_training(&t, &syn).unwrap();
        assert_eq!(merged.len(), 40);
        assert_eq!(merged.examples()[..20], t.examples()[..]);

        let empty = DatasetSplit::empty(TaskSpec::sst2(), SplitKind::Synthetic);
        assert_eq!(merge_for_training(&t, &empty).unwrap().examples(), t.examples());

        assert!(matches!(merge_for_training(&t, &t), Err(AugmentError::Merge(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut mock = MockBackend::new(TaskSpec::sst2());
        let run = run_augmentation(&mut mock, &train(3), 2, 1).unwrap();
        let mut buf = Vec::new();
        write_records_jsonl(&run.records, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 6);
        let back = read_records_jsonl(&buf[..]).unwrap();
        assert_eq!(back, run.records);
    }
}
