//! Task-specific prompts for three overlapping tasks, then the cross-task
//! stage for each task with the other two as sources.
//!
//! `cargo run --release --example cross_task_tuning [checkpoint]`

mod common;

use ctpt::numerics::RngStream;
use ctpt::pipeline::TaskBundle;

fn main() -> ctpt::Result<()> {
    let setup = common::setup()?;
    let pipe = setup.pipeline(common::small_config())?;
    let rng = RngStream::new(2);
    let ids = ["daily", "tv", "ec"];
    let bundles = ids
        .iter()
        .map(|id| setup.trained(&pipe, id, &rng))
        .collect::<ctpt::Result<Vec<_>>>()?;
    for (i, target) in bundles.iter().enumerate() {
        let sources: Vec<&TaskBundle> = bundles.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b).collect();
        let (assembly, trace) = pipe.train_ctpt(target, &sources, &rng)?;
        let tspt = pipe.evaluate_tspt(target)?.report;
        let ctpt = pipe.evaluate_ctpt(&assembly, target, &sources)?.report;
        println!(
            "{:6} {}: TSPT {:.3}  CTPT {:.3}  ({} learnables, mean gate {:.2}, {} generations)",
            target.id(),
            tspt.metric,
            tspt.score,
            ctpt.score,
            assembly.learnables(),
            assembly.gate_values()?.mean(),
            trace.len()
        );
    }
    Ok(())
}
