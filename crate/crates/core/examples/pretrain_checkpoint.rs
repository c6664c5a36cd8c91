//! Pretrains a reduced-size masked model on the synthetic world, writes the
//! checkpoint, reloads it and compares checksums and logits.

mod common;

use ctpt::frozen_model::FrozenModel;
use ctpt::prompt_engine::{build_pattern, initial_prompt};

fn main() -> ctpt::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let setup = common::setup()?;
    let model = &setup.model;
    if let Some(s) = model.pretrain_summary() {
        println!("{} steps on {} sequences, final loss {:.3}", s.steps, s.corpus_size, s.final_loss);
    }
    println!("{} parameters, vocabulary {}", model.parameter_count(), model.vocab().len());

    let dir = std::env::temp_dir().join("ctpt-example");
    std::fs::create_dir_all(&dir).map_err(|e| ctpt::Error::io(&dir, e))?;
    let path = dir.join("model.ckpt");
    model.save(&path)?;
    let loaded = FrozenModel::load(&path)?;
    println!("checkpoint {} sha256 {}", path.display(), loaded.checksum());
    assert_eq!(loaded.checksum(), model.checksum());

    let conv = &setup.suite.task("daily").expect("task").test[0];
    let input = build_pattern(&initial_prompt(model, 6)?, &conv.context_tokens(0, model.vocab()), model)?;
    assert_eq!(model.forward(&input)?, loaded.forward(&input)?);
    println!("reloaded model gives identical logits on {:?}", conv.utterances[0].text);
    Ok(())
}
