use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::objective::Group;
use super::{CtptAssembly, Evaluation, Pipeline, StageTrace, TaskBundle};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::prompt_engine::PromptMatrix;

/// Mean cross-task score over every source subset of one size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub size: usize,
    pub subsets: Vec<Vec<String>>,
    pub scores: Vec<f64>,
    pub mean: f64,
}

impl Pipeline<'_> {
    /// Trains attention and gate on the sources' few-shot data with `p₀` as
    /// both query and task prompt, then scores the target's test split. The
    /// target's own prompt vector is never read.
    pub fn zero_shot_transfer(
        &self,
        sources: &[&TaskBundle],
        target: &TaskBundle,
        rng: &RngStream,
    ) -> Result<(Evaluation, CtptAssembly, Vec<StageTrace>)> {
        if sources.is_empty() {
            return Err(Error::Argument("zero-shot transfer needs at least one source task".into()));
        }
        if sources.iter().any(|s| s.id() == target.id()) {
            return Err(Error::Argument(format!("target {} appears among the source tasks", target.id())));
        }
        let src = self.source_prompts(sources)?;
        let src_refs: Vec<&PromptMatrix> = src.iter().collect();
        let stream = rng.derive(&format!("transfer:{}", target.id()));
        let mut assembly = CtptAssembly::initial(
            target.id(),
            sources.iter().map(|s| s.id().to_string()).collect(),
            self.d(),
            self.n(),
            &self.config.prompt,
            false,
            true,
            self.config.emotional_knowledge,
            &stream,
        )?;
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for s in sources {
            let decoder = self.ctpt_decoder(s)?;
            train.push(Group {
                decoder,
                items: s.train_items(),
            });
            dev.push(Group {
                decoder,
                items: s.dev_items(),
            });
        }
        // the target must decode through the same verbalizer family
        self.ctpt_decoder(target)?;
        let p0 = self.p0.clone();
        let trace = self.optimize_assembly(&mut assembly, &p0, &p0, &src_refs, train, dev, &stream)?;
        let eval = self.evaluate_ctpt(&assembly, target, sources)?;
        Ok((eval, assembly, trace))
    }

    /// Cross-task score of `target` averaged over every subset of `sources`
    /// of each size `0..=sources.len()`. Size 0 is the task-specific score.
    pub fn ablate_sources(&self, target: &TaskBundle, sources: &[&TaskBundle], rng: &RngStream) -> Result<Vec<AblationPoint>> {
        if sources.len() < 2 {
            return Err(Error::Argument("source ablation needs at least two source tasks".into()));
        }
        let base = self.evaluate_tspt(target)?.report.score;
        let mut points = vec![AblationPoint {
            size: 0,
            subsets: vec![Vec::new()],
            scores: vec![base],
            mean: base,
        }];
        for size in 1..=sources.len() {
            let mut subsets = Vec::new();
            let mut scores = Vec::new();
            for combo in sources.iter().copied().combinations(size) {
                let names: Vec<String> = combo.iter().map(|s| s.id().to_string()).collect();
                let stream = rng.derive(&format!("ablate:{}", names.join("+")));
                let (assembly, _) = self.train_ctpt(target, &combo, &stream)?;
                scores.push(self.evaluate_ctpt(&assembly, target, &combo)?.report.score);
                subsets.push(names);
            }
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            log::info!("ablation {}: size {size}, {} subsets, mean {mean:.4}", target.id(), subsets.len());
            points.push(AblationPoint {
                size,
                subsets,
                scores,
                mean,
            });
        }
        Ok(points)
    }
}
