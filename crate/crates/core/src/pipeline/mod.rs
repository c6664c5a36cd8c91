//! Task-specific prompt tuning, the cross-task stage, evaluation and the
//! zero-shot and source-ablation protocols.
//!
//! A [`Pipeline`] borrows one frozen model and owns the worker pool used to
//! score candidate vectors. Every stage is a CMA-ES search in an intrinsic
//! space whose candidates are mapped to a soft prompt and scored by the mean
//! cross-entropy on the few-shot training set; the candidate with the lowest
//! dev loss is kept.

mod artifact;
mod bundle;
mod config;
mod ctpt;
mod eval;
mod metrics;
mod objective;
mod stage;
mod transfer;

use crate::data::{FewShotSplit, TaskDataset};
use crate::error::{Error, Result};
use crate::frozen_model::FrozenModel;
use crate::numerics::RngStream;
use crate::prompt_engine::{initial_prompt, PromptMatrix};
use crate::verbalizer::{TaskVerbalizer, UnionVerbalizer};

pub use artifact::{projection_digest, save_assembly, save_task_prompt};
pub use bundle::{PromptState, TaskBundle};
pub use config::{CtptSchedule, PipelineConfig, PromptConfig, StageConfig};
pub use ctpt::CtptAssembly;
pub use eval::{EvalReport, Evaluation};
pub use metrics::{micro_f1_excluding, per_label, score, weighted_macro_f1, ConfusionMatrix, LabelScore, Metric};
pub use objective::{cross_entropy, loss, mean_loss, predict, Decoder, Group, Item};
pub use stage::{StageOutcome, StageTrace};
pub use transfer::AblationPoint;

use stage::StageProblem;

/// Seed and config digest stamped into every report.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunTag {
    pub seed: u64,
    pub fingerprint: String,
}

pub struct Pipeline<'m> {
    model: &'m FrozenModel,
    config: PipelineConfig,
    union: Option<UnionVerbalizer>,
    p0: PromptMatrix,
    pool: rayon::ThreadPool,
    tag: RunTag,
}

impl<'m> Pipeline<'m> {
    /// `union` is required when the cross-task stage uses emotional knowledge.
    pub fn new(model: &'m FrozenModel, config: PipelineConfig, union: Option<UnionVerbalizer>) -> Result<Self> {
        config.validate()?;
        if !model.is_frozen() {
            return Err(Error::Config("prompt tuning requires a frozen model".into()));
        }
        let p0 = initial_prompt(model, config.prompt.tokens)?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = config.workers {
            builder = builder.num_threads(w);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            model,
            config,
            union,
            p0,
            pool,
            tag: RunTag::default(),
        })
    }

    pub fn with_tag(mut self, tag: RunTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn model(&self) -> &FrozenModel {
        self.model
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn union(&self) -> Option<&UnionVerbalizer> {
        self.union.as_ref()
    }

    pub fn p0(&self) -> &PromptMatrix {
        &self.p0
    }

    pub fn tag(&self) -> &RunTag {
        &self.tag
    }

    fn n(&self) -> usize {
        self.config.prompt.tokens
    }

    fn d(&self) -> usize {
        self.model.d_model()
    }

    pub fn bundle(&self, dataset: TaskDataset, verbalizer: TaskVerbalizer, metric: Metric, rng: &RngStream) -> Result<TaskBundle> {
        let prompt = &self.config.prompt;
        TaskBundle::new(
            dataset,
            verbalizer,
            metric,
            self.model,
            &self.p0,
            prompt.prompt_dim,
            prompt.shared_projection,
            self.config.k_shot,
            rng,
        )
    }

    pub fn bundle_with_split(
        &self,
        dataset: TaskDataset,
        verbalizer: TaskVerbalizer,
        metric: Metric,
        split: FewShotSplit,
        rng: &RngStream,
    ) -> Result<TaskBundle> {
        let prompt = &self.config.prompt;
        TaskBundle::with_split(
            dataset,
            verbalizer,
            metric,
            split,
            self.model,
            &self.p0,
            prompt.prompt_dim,
            prompt.shared_projection,
            rng,
        )
    }

    /// Installs a previously trained vector.
    pub fn restore_prompt(&self, bundle: &mut TaskBundle, z: Vec<f64>) -> Result<()> {
        if z.len() != bundle.projection().intrinsic_dim() {
            return Err(Error::shape("restore_prompt", bundle.projection().intrinsic_dim(), z.len()));
        }
        bundle.set_prompt(PromptState::Trained(z));
        Ok(())
    }

    /// Task-specific prompt tuning of `bundle.z`. With a budget smaller than
    /// one generation the vector stays at zero and is flagged as such.
    pub fn train_tspt(&self, bundle: &mut TaskBundle, rng: &RngStream) -> Result<StageOutcome> {
        let (n, d) = (self.n(), self.d());
        let proj = bundle.projection().clone();
        let problem = StageProblem {
            name: format!("tspt:{}", bundle.id()),
            model: self.model,
            build: |z: &[f64]| crate::prompt_engine::project_prompt(&proj, z, n, d),
            train: vec![Group {
                decoder: Decoder::Task(&bundle.verbalizer),
                items: bundle.train_items(),
            }],
            dev: vec![Group {
                decoder: Decoder::Task(&bundle.verbalizer),
                items: bundle.dev_items(),
            }],
        };
        let mut stream = rng.derive(&format!("tspt:{}", bundle.id()));
        let out = problem.run(vec![0.0; proj.intrinsic_dim()], &self.config.tspt, &self.pool, &mut stream)?;
        bundle.set_prompt(if out.trained {
            PromptState::Trained(out.best.clone())
        } else {
            PromptState::ZeroBudget(out.best.clone())
        });
        Ok(out)
    }

    fn decoder_for<'a>(&'a self, verb: &'a TaskVerbalizer) -> Result<Decoder<'a>> {
        if !self.config.emotional_knowledge {
            return Ok(Decoder::Task(verb));
        }
        let union = self
            .union
            .as_ref()
            .ok_or_else(|| Error::Config("emotional knowledge is enabled but no union verbalizer was supplied".into()))?;
        if union.task(verb.task_id()).is_none() {
            return Err(Error::Config(format!(
                "task {} is not part of the union verbalizer",
                verb.task_id()
            )));
        }
        Ok(Decoder::Union {
            union,
            target: verb.task_id(),
        })
    }

    /// Decoder used by the cross-task stage for `bundle`'s task.
    pub fn ctpt_decoder<'a>(&'a self, bundle: &'a TaskBundle) -> Result<Decoder<'a>> {
        self.decoder_for(&bundle.verbalizer)
    }

    fn source_prompts(&self, sources: &[&TaskBundle]) -> Result<Vec<PromptMatrix>> {
        let missing: Vec<&str> = sources.iter().filter(|s| !s.is_trained()).map(|s| s.id()).collect();
        if !missing.is_empty() {
            return Err(Error::Training(format!(
                "source tasks without a trained prompt: {}",
                missing.join(", ")
            )));
        }
        sources.iter().map(|s| s.task_prompt(self.n(), self.d())).collect()
    }

    /// Cross-task stage for `target` over the trained prompts of `sources`.
    pub fn train_ctpt(&self, target: &TaskBundle, sources: &[&TaskBundle], rng: &RngStream) -> Result<(CtptAssembly, Vec<StageTrace>)> {
        if sources.is_empty() {
            return Err(Error::Argument(format!("task {} has no source tasks", target.id())));
        }
        if sources.iter().any(|s| s.id() == target.id()) {
            return Err(Error::Argument(format!("task {} cannot be its own source", target.id())));
        }
        if !target.is_trained() {
            return Err(Error::Training(format!("target task {} has no trained prompt", target.id())));
        }
        let pt = target.task_prompt(self.n(), self.d())?;
        let src = self.source_prompts(sources)?;
        let src_refs: Vec<&PromptMatrix> = src.iter().collect();
        let decoder = self.decoder_for(&target.verbalizer)?;
        let stream = rng.derive(&format!("ctpt:{}", target.id()));
        let mut assembly = CtptAssembly::initial(
            target.id(),
            sources.iter().map(|s| s.id().to_string()).collect(),
            self.d(),
            self.n(),
            &self.config.prompt,
            self.config.force_gate_ones,
            false,
            self.config.emotional_knowledge,
            &stream,
        )?;
        let train = vec![Group {
            decoder,
            items: target.train_items(),
        }];
        let dev = vec![Group {
            decoder,
            items: target.dev_items(),
        }];
        let trace = self.optimize_assembly(&mut assembly, &pt, &pt, &src_refs, train, dev, &stream)?;
        Ok((assembly, trace))
    }

    /// Runs the configured schedule over `[z′; z″]` and stores the winners.
    #[allow(clippy::too_many_arguments)]
    fn optimize_assembly(
        &self,
        assembly: &mut CtptAssembly,
        query: &PromptMatrix,
        task_prompt: &PromptMatrix,
        sources: &[&PromptMatrix],
        train: Vec<Group<'_>>,
        dev: Vec<Group<'_>>,
        stream: &RngStream,
    ) -> Result<Vec<StageTrace>> {
        let (da, dg) = (assembly.z_attention.len(), assembly.z_gate.len());
        let cfg = &self.config.ctpt;
        let mut traces = Vec::new();
        let mut trained = false;
        match self.config.schedule {
            CtptSchedule::Joint => {
                let frozen = assembly.clone();
                let problem = StageProblem {
                    name: format!("ctpt:{}", assembly.target),
                    model: self.model,
                    build: |x: &[f64]| frozen.combine_with(&x[..da], &x[da..], query, task_prompt, sources),
                    train,
                    dev,
                };
                let out = problem.run(vec![0.0; da + dg], cfg, &self.pool, &mut stream.derive("joint"))?;
                assembly.z_attention = out.best[..da].to_vec();
                assembly.z_gate = out.best[da..].to_vec();
                trained |= out.trained;
                traces.extend(out.trace);
            }
            CtptSchedule::Sequential => {
                let first = StageConfig {
                    budget: cfg.budget / 2,
                    ..cfg.clone()
                };
                let frozen = assembly.clone();
                let zg = vec![0.0; dg];
                let problem = StageProblem {
                    name: format!("ctpl:{}", assembly.target),
                    model: self.model,
                    build: |x: &[f64]| frozen.combine_with(x, &zg, query, task_prompt, sources),
                    train: train.clone(),
                    dev: dev.clone(),
                };
                let out = problem.run(vec![0.0; da], &first, &self.pool, &mut stream.derive("attention"))?;
                assembly.z_attention = out.best;
                trained |= out.trained;
                traces.extend(out.trace);

                let second = StageConfig {
                    budget: cfg.budget - out.evaluations,
                    ..cfg.clone()
                };
                let frozen = assembly.clone();
                let problem = StageProblem {
                    name: format!("ctpo:{}", assembly.target),
                    model: self.model,
                    build: |x: &[f64]| frozen.combine_with(&frozen.z_attention, x, query, task_prompt, sources),
                    train,
                    dev,
                };
                let out = problem.run(vec![0.0; dg], &second, &self.pool, &mut stream.derive("gate"))?;
                assembly.z_gate = out.best;
                trained |= out.trained;
                traces.extend(out.trace);
            }
        }
        assembly.trained = trained;
        Ok(traces)
    }

    /// The combined prompt of a trained assembly for `target`.
    pub fn ctpt_prompt(&self, assembly: &CtptAssembly, target: &TaskBundle, sources: &[&TaskBundle]) -> Result<PromptMatrix> {
        let ids: Vec<&str> = sources.iter().map(|s| s.id()).collect();
        if ids != assembly.sources.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Argument(format!(
                "assembly was trained with sources [{}], got [{}]",
                assembly.sources.join(", "),
                ids.join(", ")
            )));
        }
        let src = self.source_prompts(sources)?;
        let src_refs: Vec<&PromptMatrix> = src.iter().collect();
        if assembly.zero_shot {
            assembly.combine(&self.p0, &self.p0, &src_refs)
        } else {
            let pt = target.task_prompt(self.n(), self.d())?;
            assembly.combine(&pt, &pt, &src_refs)
        }
    }
}

#[cfg(test)]
mod tests;
