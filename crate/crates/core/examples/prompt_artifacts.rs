//! Saves a trained task prompt and a cross-task assembly, then restores both
//! into a fresh pipeline and checks that the scores match.

mod common;

use ctpt::numerics::RngStream;
use ctpt::pipeline::{save_assembly, save_task_prompt, RunTag};

fn main() -> ctpt::Result<()> {
    let setup = common::setup()?;
    let tag = RunTag {
        seed: 8,
        fingerprint: "example".into(),
    };
    let pipe = setup.pipeline(common::small_config())?.with_tag(tag.clone());
    let rng = RngStream::new(tag.seed);
    let target = setup.trained(&pipe, "ec", &rng)?;
    let source = setup.trained(&pipe, "tv", &rng)?;
    let (assembly, _) = pipe.train_ctpt(&target, &[&source], &rng)?;

    let dir = std::env::temp_dir().join("ctpt-example");
    std::fs::create_dir_all(&dir).map_err(|e| ctpt::Error::io(&dir, e))?;
    let (prompt_path, assembly_path) = (dir.join("ec.prompt"), dir.join("ec.ctpt"));
    save_task_prompt(&target, &tag, &prompt_path)?;
    save_task_prompt(&source, &tag, &dir.join("tv.prompt"))?;
    save_assembly(&assembly, &tag, &assembly_path)?;

    let mut restored = setup.bundle(&pipe, "ec", &rng)?;
    pipe.load_task_prompt(&mut restored, &prompt_path)?;
    let mut restored_source = setup.bundle(&pipe, "tv", &rng)?;
    pipe.load_task_prompt(&mut restored_source, &dir.join("tv.prompt"))?;
    let loaded = pipe.load_assembly(&assembly_path, &rng)?;
    assert_eq!(loaded, assembly);

    let before = pipe.evaluate_ctpt(&assembly, &target, &[&source])?.report.score;
    let after = pipe.evaluate_ctpt(&loaded, &restored, &[&restored_source])?.report.score;
    println!("CTPT score before saving {before:.4}, after restoring {after:.4}");

    let wrong_seed = pipe.load_assembly(&assembly_path, &RngStream::new(9));
    println!(
        "loading with another seed: {}",
        wrong_seed.map(|_| "accepted".to_string()).unwrap_or_else(|e| e.to_string())
    );
    Ok(())
}
