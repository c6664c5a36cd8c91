use crate::data::FewShotExample;
use crate::error::{Error, Result};
use crate::frozen_model::{FrozenModel, Vocabulary};
use crate::prompt_engine::{build_pattern, PromptMatrix};
use crate::verbalizer::{Decoded, TaskVerbalizer, UnionVerbalizer};

/// Floor applied before taking logs so that a vanishing gold probability
/// yields a large but finite loss.
const PROB_FLOOR: f64 = 1e-300;

/// A tokenized utterance in context with its gold label index.
#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub context: Vec<Vec<usize>>,
    pub gold: usize,
}

impl Item {
    pub fn from_example(ex: &FewShotExample, verb: &TaskVerbalizer, vocab: &Vocabulary) -> Result<Self> {
        let gold = verb.label_index(&ex.label).ok_or_else(|| {
            Error::Config(format!(
                "gold label {:?} is not covered by the verbalizer of task {}",
                ex.label,
                verb.task_id()
            ))
        })?;
        Ok(Self {
            context: ex.conversation.context_tokens(ex.target, vocab),
            gold,
        })
    }
}

/// How mask logits become a label distribution for one task.
#[derive(Clone, Copy, Debug)]
pub enum Decoder<'a> {
    Task(&'a TaskVerbalizer),
    Union { union: &'a UnionVerbalizer, target: &'a str },
}

impl<'a> Decoder<'a> {
    pub fn token_ids(&self) -> &'a [usize] {
        match *self {
            Decoder::Task(v) => v.token_ids(),
            Decoder::Union { union, .. } => union.token_ids(),
        }
    }

    /// Decodes logits restricted to [`Decoder::token_ids`].
    pub fn decode(&self, sub: &[f64]) -> Result<Decoded> {
        match *self {
            Decoder::Task(v) => crate::verbalizer::decode_label_subset(sub, v),
            Decoder::Union { union, target } => union.decode_subset(sub, target),
        }
    }
}

/// `−ln p[gold]`.
pub fn cross_entropy(distribution: &[f64], gold: usize) -> Result<f64> {
    let p = distribution
        .get(gold)
        .ok_or_else(|| Error::Config(format!("gold index {gold} outside a {}-label distribution", distribution.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

pub fn predict(model: &FrozenModel, prompt: &PromptMatrix, context: &[Vec<usize>], decoder: Decoder<'_>) -> Result<Decoded> {
    let input = build_pattern(prompt, context, model)?;
    let sub = model.forward_subset(&input, decoder.token_ids())?;
    decoder.decode(&sub)
}

/// Items of one task paired with the decoder for that task.
#[derive(Clone, Copy, Debug)]
pub struct Group<'a> {
    pub decoder: Decoder<'a>,
    pub items: &'a [Item],
}

/// Mean cross-entropy over every item of every group.
pub fn mean_loss(model: &FrozenModel, prompt: &PromptMatrix, groups: &[Group<'_>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for g in groups {
        for item in g.items {
            let d = predict(model, prompt, &item.context, g.decoder)?;
            total += cross_entropy(&d.distribution, item.gold)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Argument("loss over an empty example set".into()));
    }
    Ok(total / count as f64)
}

/// Batch loss for raw few-shot examples of one task.
pub fn loss(
    model: &FrozenModel,
    prompt: &PromptMatrix,
    examples: &[FewShotExample],
    verb: &TaskVerbalizer,
    decoder: Decoder<'_>,
) -> Result<f64> {
    let items = examples
        .iter()
        .map(|ex| Item::from_example(ex, verb, model.vocab()))
        .collect::<Result<Vec<_>>>()?;
    mean_loss(model, prompt, &[Group { decoder, items: &items }])
}
