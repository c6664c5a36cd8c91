use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{per_label, score, ConfusionMatrix, LabelScore, Metric};
use super::objective::{predict, Decoder};
use super::{CtptAssembly, Pipeline, TaskBundle};
use crate::error::{Error, Result};
use crate::prompt_engine::PromptMatrix;

/// Test-set score of one prompt on one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub method: String,
    pub metric: Metric,
    pub score: f64,
    pub per_label: Vec<LabelScore>,
    pub examples: usize,
    pub fingerprint: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Predicted label index per test utterance, in file order.
    pub predictions: Vec<usize>,
    pub gold: Vec<usize>,
}

impl Pipeline<'_> {
    /// Labels every test utterance of `bundle` with `prompt` and scores the
    /// result with the task's metric.
    pub fn evaluate_prompt(&self, bundle: &TaskBundle, prompt: &PromptMatrix, decoder: Decoder<'_>, method: &str) -> Result<Evaluation> {
        let verb = &bundle.verbalizer;
        let vocab = self.model.vocab();
        let items: Vec<(Vec<Vec<usize>>, usize)> = bundle
            .dataset
            .test_items()
            .map(|(c, j)| {
                let label = &c.utterances[j].emotion;
                let gold = verb
                    .label_index(label)
                    .ok_or_else(|| Error::Config(format!("test label {label:?} is not covered by the verbalizer of {}", bundle.id())))?;
                Ok((c.context_tokens(j, vocab), gold))
            })
            .collect::<Result<_>>()?;
        if items.is_empty() {
            return Err(Error::Argument(format!("task {} has an empty test split", bundle.id())));
        }
        let predictions: Vec<usize> = self.pool.install(|| {
            items
                .par_iter()
                .map(|(ctx, _)| predict(self.model, prompt, ctx, decoder).map(|d| d.index))
                .collect::<Result<_>>()
        })?;
        let gold: Vec<usize> = items.iter().map(|(_, g)| *g).collect();
        let cm = ConfusionMatrix::from_pairs(verb.len(), &gold, &predictions)?;
        let neutral = verb.neutral().and_then(|n| verb.label_index(n));
        let report = EvalReport {
            task_id: bundle.id().to_string(),
            method: method.to_string(),
            metric: bundle.metric,
            score: score(bundle.metric, &cm, neutral),
            per_label: per_label(&cm, verb.labels()),
            examples: gold.len(),
            fingerprint: self.tag.fingerprint.clone(),
            seed: self.tag.seed,
        };
        Ok(Evaluation { report, predictions, gold })
    }

    pub fn evaluate_tspt(&self, bundle: &TaskBundle) -> Result<Evaluation> {
        let prompt = bundle.task_prompt(self.n(), self.d())?;
        self.evaluate_prompt(bundle, &prompt, Decoder::Task(&bundle.verbalizer), "tspt")
    }

    pub fn evaluate_ctpt(&self, assembly: &CtptAssembly, target: &TaskBundle, sources: &[&TaskBundle]) -> Result<Evaluation> {
        let prompt = self.ctpt_prompt(assembly, target, sources)?;
        let decoder = if assembly.emotional_knowledge {
            let union = self
                .union
                .as_ref()
                .ok_or_else(|| Error::Config("assembly needs a union verbalizer".into()))?;
            Decoder::Union {
                union,
                target: target.id(),
            }
        } else {
            Decoder::Task(&target.verbalizer)
        };
        let method = if assembly.zero_shot { "zero_shot" } else { "ctpt" };
        self.evaluate_prompt(target, &prompt, decoder, method)
    }
}
