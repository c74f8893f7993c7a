//! The repeated-trial protocol: subsample, augment, train a classifier on
//! original plus synthetic data, score on test, and tabulate mean (std).
//!
//! `cargo run --release --example extrinsic_experiment`

use augtool::backends::{BackendConfig, Generator, Method, MockBackend};
use augtool::corpus::TaskSpec;
use augtool::experiment::{format_report, run_experiment, ConfigBackendFactory, ExperimentConfig};
use augtool::fixtures;
use augtool::metrics::ClassifierConfig;

fn main() -> anyhow::Result<()> {
    let data = fixtures::toy_experiment_data(60, 60, 2024);
    let mut config = ExperimentConfig::new(BackendConfig::for_method(Method::Mock), 10);
    config.trials = 15;
    config.master_seed = 2024;
    config.workers = 4;
    config.classifier = ClassifierConfig::bow_linear();

    let mock = run_experiment(&config, &data, &ConfigBackendFactory::default(), None)?;
    let adversarial = |_: &BackendConfig, task: &TaskSpec| {
        Ok(Box::new(MockBackend::adversarial(task.clone())) as Box<dyn Generator>)
    };
    let mut shuffled = run_experiment(&config, &data, &adversarial, None)?;
    shuffled.method = "mock_adversarial".into();

    print!("{}", format_report(&[mock.clone(), shuffled.clone()]));
    println!(
        "label match: mock {:.2}, adversarial {:.2}",
        mock.label_match_rate, shuffled.label_match_rate
    );
    Ok(())
}
