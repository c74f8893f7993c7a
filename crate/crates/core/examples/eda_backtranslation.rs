//! The two tune-free baselines: EDA with a small synonym lexicon, and
//! backtranslation through an in-process translator pair.
//!
//! `cargo run --example eda_backtranslation`

use std::collections::HashMap;
use std::sync::Arc;

use augtool::augment::run_augmentation;
use augtool::backends::{backtranslate, BacktranslationBackend, EdaBackend, SynonymLexicon, TunedGenerator};
use augtool::corpus::{DatasetSplit, LabeledExample, SplitKind, TaskSpec};

/// A toy "pivot language": reverses word order and upper-cases.
fn to_pivot(text: &str) -> Result<String, String> {
    Ok(text.split(' ').rev().collect::<Vec<_>>().join(" ").to_uppercase())
}

/// Inverse of `to_pivot`, except that it paraphrases one word.
fn from_pivot(text: &str) -> Result<String, String> {
    let back: Vec<String> = text.split(' ').rev().map(str::to_lowercase).collect();
    Ok(back.join(" ").replace("movie", "film"))
}

fn main() -> anyhow::Result<()> {
    let task = TaskSpec::sst2();
    let train = DatasetSplit::new(
        task,
        SplitKind::Train,
        vec![
            LabeledExample::new("0", "positive", "a good movie with a happy ending")?,
            LabeledExample::new("1", "negative", "a bad movie with a sad ending")?,
        ],
    )?;

    let lexicon = SynonymLexicon::new(HashMap::from([
        ("good".to_string(), vec!["fine".to_string(), "great".to_string()]),
        ("bad".to_string(), vec!["poor".to_string()]),
        ("movie".to_string(), vec!["film".to_string()]),
    ]));
    let mut eda: Box<dyn TunedGenerator> = Box::new(EdaBackend::new(Some(Arc::new(lexicon))));
    let run = run_augmentation(eda.as_mut(), &train, 3, 1)?;
    for ex in &run.synthetic {
        println!("eda  {:<8} {}", ex.label(), ex.text());
    }

    println!("pivot: {}", to_pivot(train.examples()[0].text()).unwrap());
    println!("back:  {}", backtranslate(train.examples()[0].text(), &to_pivot, &from_pivot)?);
    let mut bt = BacktranslationBackend::new(Arc::new(to_pivot), Arc::new(from_pivot));
    let run = run_augmentation(&mut bt, &train, 1, 1)?;
    for ex in &run.synthetic {
        println!("bt   {:<8} {}", ex.label(), ex.text());
    }
    Ok(())
}
