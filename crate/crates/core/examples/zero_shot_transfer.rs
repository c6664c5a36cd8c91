//! Zero-shot transfer to a task whose own prompt is never trained: once from
//! a source with the same data distribution, once from an unrelated domain.

mod common;

use ctpt::numerics::RngStream;

fn main() -> ctpt::Result<()> {
    let setup = common::setup()?;
    let pipe = setup.pipeline(common::small_config())?;
    let rng = RngStream::new(4);
    let related = setup.trained(&pipe, "daily", &rng)?;
    let unrelated = setup.trained(&pipe, "unrelated", &rng)?;
    let target = setup.bundle(&pipe, "daily_clone", &rng)?;
    for source in [&related, &unrelated] {
        let (eval, assembly, _) = pipe.zero_shot_transfer(&[source], &target, &rng)?;
        println!(
            "{} -> {}: {} {:.3} (mean gate {:.2})",
            source.id(),
            target.id(),
            eval.report.metric,
            eval.report.score,
            assembly.gate_values()?.mean()
        );
    }
    println!("target prompt reads: {}", target.z_reads());
    Ok(())
}
