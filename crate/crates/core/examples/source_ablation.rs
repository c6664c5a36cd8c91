//! Cross-task score of one target averaged over every subset of four sources.

mod common;

use ctpt::numerics::RngStream;
use ctpt::pipeline::{StageConfig, TaskBundle};

fn main() -> ctpt::Result<()> {
    let setup = common::setup()?;
    let mut cfg = common::small_config();
    cfg.ctpt = StageConfig {
        budget: 40,
        sigma0: 0.5,
        ..StageConfig::default()
    };
    let pipe = setup.pipeline(cfg)?;
    let rng = RngStream::new(6);
    let target = setup.trained(&pipe, "daily", &rng)?;
    let sources = ["tv", "ec", "daily_clone", "unrelated"]
        .iter()
        .map(|id| setup.trained(&pipe, id, &rng))
        .collect::<ctpt::Result<Vec<_>>>()?;
    let refs: Vec<&TaskBundle> = sources.iter().collect();
    for point in pipe.ablate_sources(&target, &refs, &rng)? {
        println!(
            "{} sources: mean {:.3} over {} subsets",
            point.size,
            point.mean,
            point.subsets.len()
        );
    }
    Ok(())
}
