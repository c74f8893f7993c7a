//! Drive a model server over the stdio JSON-lines protocol.
//!
//! By default this starts the scripted fake server from the test fixtures;
//! pass your own command to use a real one:
//!
//! `cargo run --example external_backend -- "python3 my_server.py --model bart-base"`

use augtool::augment::run_augmentation;
use augtool::backends::{build_backend, fine_tune, BackendConfig, BackendResources, Method};
use augtool::corpus::SplitKind;
use augtool::fixtures;

fn main() -> anyhow::Result<()> {
    let cmd = std::env::args().nth(1).unwrap_or_else(|| {
        format!("python3 {}/tests/fixtures/fake_backend.py", env!("CARGO_MANIFEST_DIR"))
    });
    let task = fixtures::toy_task();
    let train = fixtures::separable_split(&task, 3, SplitKind::Train, 5);
    let dev = fixtures::separable_split(&task, 2, SplitKind::Dev, 6);

    for method in [Method::S2sSpan, Method::ArContext] {
        let config = BackendConfig {
            backend_cmd: Some(cmd.clone()),
            ..BackendConfig::for_method(method)
        };
        let backend = build_backend(&config, &task, &BackendResources::default())?;
        let mut tuned = fine_tune(backend, &train, &dev)?;
        let run = run_augmentation(tuned.as_mut(), &train, 1, 0)?;
        println!("== {method}");
        for r in run.records.iter().take(3) {
            println!("  raw:  {}\n  text: {} (label match {})", r.raw_output, r.text, r.label_match);
        }
    }
    Ok(())
}
