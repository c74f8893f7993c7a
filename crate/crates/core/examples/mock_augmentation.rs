//! Generate synthetic data with the deterministic mock backend, serially and
//! with four worker handles, and write the provenance records.
//!
//! `cargo run --example mock_augmentation`

use augtool::augment::{merge_for_training, run_augmentation, run_augmentation_parallel, write_records_jsonl};
use augtool::backends::{MockBackend, TunedGenerator};
use augtool::corpus::SplitKind;
use augtool::fixtures;

fn main() -> anyhow::Result<()> {
    let task = fixtures::toy_task();
    let train = fixtures::separable_split(&task, 4, SplitKind::Train, 3);

    let run = run_augmentation(&mut MockBackend::new(task.clone()), &train, 2, 99)?;
    for (src, syn) in train.iter().zip(run.synthetic.examples().chunks(2)) {
        println!("{:>5} | {}", src.label(), src.text());
        for s in syn {
            println!("      > {}", s.text());
        }
    }
    println!("label match rate {:.2}", run.label_match_rate());

    let mut handles: Vec<Box<dyn TunedGenerator>> =
        (0..4).map(|_| Box::new(MockBackend::new(task.clone())) as Box<dyn TunedGenerator>).collect();
    let parallel = run_augmentation_parallel(&mut handles, &train, 2, 99)?;
    assert_eq!(parallel.records, run.records);

    let merged = merge_for_training(&train, &run.synthetic)?;
    println!("merged training split: {} examples", merged.len());
    write_records_jsonl(&run.records[..2], std::io::stdout().lock())?;
    Ok(())
}
