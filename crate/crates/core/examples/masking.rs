//! Word, span and masked-LM corruption, and how each one is undone.
//!
//! `cargo run --example masking`

use augtool::corruption::{corrupt, mask_count, MaskPlan};
use augtool::seed::rng_from_seed;

fn main() -> anyhow::Result<()> {
    let words: Vec<&str> = "the quick brown fox jumps over the lazy sleeping dog".split(' ').collect();
    let mut rng = rng_from_seed(7);
    for plan in [MaskPlan::word(), MaskPlan::span(), MaskPlan::mlm()] {
        let out = corrupt(&words, &plan, &mut rng)?;
        println!(
            "{:?} rate {:.2}: {} masked -> {}",
            plan.scheme,
            plan.rate,
            mask_count(words.len(), plan.rate),
            out.corrupted_text()
        );
        assert_eq!(out.reconstruct(), words);
    }
    Ok(())
}
