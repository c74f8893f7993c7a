//! Draw the low-resource train/dev split a single trial trains on.
//!
//! `cargo run --example subsample`

use augtool::corpus::{self, subsample_low_resource};
use augtool::fixtures;

fn main() -> anyhow::Result<()> {
    let full = fixtures::toy_experiment_data(60, 20, 1).train;
    println!("pool: {:?}", full.label_histogram());

    let (train, dev) = subsample_low_resource(&full, 10, 10, 42)?;
    println!("train_sub: {:?}", train.label_histogram());
    println!("dev_sub:   {:?}", dev.label_histogram());

    // same seed, same selection, whatever order the pool is in
    let mut reversed = full.examples().to_vec();
    reversed.reverse();
    let reversed = corpus::DatasetSplit::new(full.task().clone(), full.kind(), reversed)?;
    let (again, _) = subsample_low_resource(&reversed, 10, 10, 42)?;
    assert_eq!(train.examples(), again.examples());

    corpus::write_tsv(&train, std::io::stdout().lock())?;
    Ok(())
}
