//! Label conditioning: prepend for autoencoder and seq2seq models, the
//! `label SEP text EOS` layout for auto-regressive ones.
//!
//! `cargo run --example conditioning`

use augtool::conditioning::{self, ArMarkers, ConditioningMode};
use augtool::corpus::{DatasetSplit, LabeledExample, SplitKind, TaskSpec};

fn main() -> anyhow::Result<()> {
    let task = TaskSpec::sst2();
    let ex = LabeledExample::new("0", "positive", "a charming and often affecting journey")?;

    let prepended = conditioning::prepend_encode(&ex);
    println!("prepend:      {prepended}");
    println!("strip_label:  {:?}", conditioning::strip_label(&prepended, &task));
    println!("expand adds:  {:?}", ConditioningMode::Expand.added_tokens(&task));

    let markers = ArMarkers::default();
    let other = LabeledExample::new("1", "negative", "the plot is wafer thin")?;
    let split = DatasetSplit::new(task.clone(), SplitKind::Train, vec![ex.clone(), other])?;
    println!("ar corpus:    {}", conditioning::ar_corpus_encode(&split, &markers));
    for k in [0, 3] {
        println!("ar prompt k={k}: {}", conditioning::ar_prompt(ex.label(), ex.text(), k, &markers));
    }

    let raw = "positive SEP a charming film EOS negative SEP junk";
    println!("parsed:       {:?}", conditioning::parse_ar_output(raw, &task, &markers, 64));
    Ok(())
}
