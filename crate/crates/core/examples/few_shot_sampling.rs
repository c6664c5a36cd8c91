//! Draws k examples per category from a synthetic task and shows that the
//! draw depends only on the seed.

mod common;

use std::collections::BTreeMap;

use ctpt::data::synthetic::{GeneratedSuite, SuiteConfig};
use ctpt::data::{sample_few_shot, stats};
use ctpt::numerics::RngStream;

fn main() -> ctpt::Result<()> {
    let cfg = SuiteConfig::from_file(&common::configs().join("suite.toml"))?;
    let suite = GeneratedSuite::generate(&cfg)?;
    let ds = suite.task("tv").expect("task");
    println!("{}: {:?}", ds.task_id, stats(ds));
    let split = sample_few_shot(ds, 8, &mut RngStream::new(3).derive("sample:tv"))?;
    let mut per_label = BTreeMap::<&str, usize>::new();
    for ex in &split.train {
        *per_label.entry(ex.label.as_str()).or_default() += 1;
    }
    println!("train {} examples {per_label:?}, dev {}", split.train.len(), split.dev.len());
    let ex = &split.train[0];
    println!("first example: {} utterance {} -> {}", ex.conversation.id, ex.target, ex.label);
    let again = sample_few_shot(ds, 8, &mut RngStream::new(3).derive("sample:tv"))?;
    println!("same seed, same draw: {}", again == split);
    Ok(())
}
