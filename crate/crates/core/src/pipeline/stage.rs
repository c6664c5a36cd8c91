use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::StageConfig;
use super::objective::{mean_loss, Group};
use crate::cmaes::CmaesState;
use crate::error::{Error, Result};
use crate::frozen_model::FrozenModel;
use crate::numerics::RngStream;
use crate::prompt_engine::PromptMatrix;

/// One generation of a stage trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    pub generation: usize,
    pub evaluations: usize,
    pub best_train_loss: f64,
    pub sigma: f64,
    /// Dev loss of this generation's best candidate, when evaluated.
    pub dev_loss: Option<f64>,
    pub selected_dev_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub best: Vec<f64>,
    pub dev_loss: f64,
    pub evaluations: usize,
    /// False when the budget did not cover a single generation.
    pub trained: bool,
    pub trace: Vec<StageTrace>,
}

/// Everything a stage needs besides the intrinsic-space search itself.
pub(crate) struct StageProblem<'a, F> {
    pub name: String,
    pub model: &'a FrozenModel,
    pub build: F,
    pub train: Vec<Group<'a>>,
    pub dev: Vec<Group<'a>>,
}

impl<F> StageProblem<'_, F>
where
    F: Fn(&[f64]) -> Result<PromptMatrix> + Sync,
{
    fn loss(&self, x: &[f64], groups: &[Group<'_>]) -> Result<f64> {
        let prompt = (self.build)(x)?;
        mean_loss(self.model, &prompt, groups)
    }

    /// CMA-ES from `x0`; every `dev_every` generations the generation's best
    /// training candidate is scored on dev, and the lowest dev loss wins.
    /// `x0` itself is scored on dev first, ties keep the earlier candidate.
    pub fn run(&self, x0: Vec<f64>, cfg: &StageConfig, pool: &rayon::ThreadPool, rng: &mut RngStream) -> Result<StageOutcome> {
        let mut best = x0.clone();
        let mut dev_loss = self.loss(&x0, &self.dev)?;
        let mut trace = Vec::new();
        let mut state = CmaesState::new(x0.len(), x0, cfg.sigma0, cfg.population)?;
        let lambda = state.population_size();
        while state.evaluations() + lambda <= cfg.budget {
            let mut batch = state.ask(rng)?;
            let losses: Vec<f64> = pool.install(|| {
                batch
                    .candidates
                    .par_iter()
                    .map(|x| self.loss(x, &self.train).unwrap_or(f64::INFINITY))
                    .collect()
            });
            let worst = losses.iter().copied().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            if worst == f64::NEG_INFINITY {
                return Err(Error::Training(format!(
                    "{}: no candidate of generation {} produced a finite loss",
                    self.name,
                    state.generation()
                )));
            }
            let gen_best = losses
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("non-empty batch");
            let gen_best_x = batch.candidates[gen_best].clone();
            batch.losses = losses.into_iter().map(|l| if l.is_finite() { l } else { worst + 1.0 }).collect();
            state.tell(batch)?;

            let generation = state.generation();
            let mut this_dev = None;
            if generation % cfg.dev_every == 0 {
                let l = self.loss(&gen_best_x, &self.dev)?;
                if l < dev_loss {
                    dev_loss = l;
                    best = gen_best_x;
                }
                this_dev = Some(l);
            }
            trace.push(StageTrace {
                stage: self.name.clone(),
                generation,
                evaluations: state.evaluations(),
                best_train_loss: state.best_loss(),
                sigma: state.sigma(),
                dev_loss: this_dev,
                selected_dev_loss: dev_loss,
            });
            log::debug!(
                "{} gen {generation}: train {:.4} dev {:.4} sigma {:.3}",
                self.name,
                state.best_loss(),
                dev_loss,
                state.sigma()
            );
        }
        Ok(StageOutcome {
            best,
            dev_loss,
            evaluations: state.evaluations(),
            trained: !trace.is_empty(),
            trace,
        })
    }
}
