//! Intrinsic metrics of a synthetic set: type-token ratio and the accuracy
//! of an oracle classifier against the labels the data was generated for.
//!
//! `cargo run --example diversity_fidelity`

use augtool::augment::run_augmentation;
use augtool::backends::MockBackend;
use augtool::corpus::SplitKind;
use augtool::fixtures;
use augtool::metrics::{semantic_fidelity, train_fidelity_oracle, type_token_ratio, ClassifierConfig};

fn main() -> anyhow::Result<()> {
    let task = fixtures::toy_task();
    let data = fixtures::toy_experiment_data(60, 60, 1);
    let dev = fixtures::separable_split(&task, 10, SplitKind::Dev, 2);
    let oracle = train_fidelity_oracle(&data.train, &data.test, &dev, &ClassifierConfig::bow_linear())?;

    let train = fixtures::separable_split(&task, 10, SplitKind::Train, 3);
    for (name, mut backend) in [
        ("mock", MockBackend::new(task.clone())),
        ("adversarial", MockBackend::adversarial(task.clone())),
    ] {
        let run = run_augmentation(&mut backend, &train, 1, 4)?;
        let texts = run.synthetic.texts();
        let fidelity = semantic_fidelity(&run.synthetic, oracle.as_ref())?;
        println!(
            "{name:<12} ttr1 {:.3}  ttr3 {:.3}  fidelity {:.2}  per label {:?}",
            type_token_ratio(&texts, 1)?.ttr,
            type_token_ratio(&texts, 3)?.ttr,
            fidelity.accuracy,
            fidelity.per_label_accuracy
        );
    }
    Ok(())
}
