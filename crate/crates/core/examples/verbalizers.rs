//! Decodes one mask distribution through a task verbalizer and through the
//! union verbalizer that pools synonymous labels across tasks.

mod common;

use ctpt::prompt_engine::{build_pattern, initial_prompt};
use ctpt::verbalizer::{decode_label, decode_union};

fn main() -> ctpt::Result<()> {
    let setup = common::setup()?;
    let vocab = setup.model.vocab();
    let vcfg = setup.suite_cfg.verbalizer_config();
    let union = vcfg.union_for(&["daily", "tv", "ec"], vocab)?;
    for uid in 0..union.union_count() {
        let members: Vec<String> = union.members(uid).iter().map(|(t, l)| format!("{t}:{l}")).collect();
        println!("union emotion {:10} <- {}", union.union_name(uid), members.join(", "));
    }

    let conv = &setup.suite.task("tv").expect("task").test[0];
    let input = build_pattern(&initial_prompt(&setup.model, 6)?, &conv.context_tokens(0, vocab), &setup.model)?;
    let logits = setup.model.forward(&input)?;
    let tv = vcfg.task_verbalizer("tv", vocab)?;
    let own = decode_label(&logits, &tv)?;
    let pooled = decode_union(&logits, &union, "tv")?;
    println!("utterance {:?} (gold {})", conv.utterances[0].text, conv.utterances[0].emotion);
    println!("task verbalizer:  {} {:.3?}", own.label, own.distribution);
    println!("union verbalizer: {} {:.3?}", pooled.label, pooled.distribution);
    Ok(())
}
