use std::sync::atomic::{AtomicUsize, Ordering};

use super::objective::Item;
use super::Metric;
use crate::data::{sample_few_shot, FewShotSplit, TaskDataset};
use crate::error::{Error, Result};
use crate::frozen_model::FrozenModel;
use crate::numerics::RngStream;
use crate::prompt_engine::{project_prompt, PromptMatrix, SubspaceProjection};
use crate::verbalizer::TaskVerbalizer;

/// State of a task's intrinsic prompt vector.
#[derive(Clone, Debug, PartialEq)]
pub enum PromptState {
    Untrained,
    /// Stage ran with no budget; `z = 0`.
    ZeroBudget(Vec<f64>),
    Trained(Vec<f64>),
}

/// One task with its data, verbalizer, few-shot split and prompt subspace.
#[derive(Debug)]
pub struct TaskBundle {
    pub dataset: TaskDataset,
    pub verbalizer: TaskVerbalizer,
    pub metric: Metric,
    pub split: FewShotSplit,
    projection: SubspaceProjection,
    prompt: PromptState,
    z_reads: AtomicUsize,
    train_items: Vec<Item>,
    dev_items: Vec<Item>,
}

impl TaskBundle {
    /// Samples the few-shot split and draws the task's projection from
    /// streams derived from `rng` and the task id. A shared projection is
    /// drawn from one stream for every task.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        dataset: TaskDataset,
        verbalizer: TaskVerbalizer,
        metric: Metric,
        model: &FrozenModel,
        p0: &PromptMatrix,
        intrinsic_dim: usize,
        shared_projection: bool,
        k_shot: usize,
        rng: &RngStream,
    ) -> Result<Self> {
        if verbalizer.task_id() != dataset.task_id {
            return Err(Error::Config(format!(
                "verbalizer for {} attached to task {}",
                verbalizer.task_id(),
                dataset.task_id
            )));
        }
        for l in &dataset.labels {
            if verbalizer.label_index(l).is_none() {
                return Err(Error::Config(format!("label {l:?} of task {} has no label word", dataset.task_id)));
            }
        }
        let id = dataset.task_id.clone();
        let split = sample_few_shot(&dataset, k_shot, &mut rng.derive(&format!("sample:{id}")))?;
        Self::with_split(dataset, verbalizer, metric, split, model, p0, intrinsic_dim, shared_projection, rng)
    }

    /// As [`TaskBundle::new`] with a split supplied by the caller.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn with_split(
        dataset: TaskDataset,
        verbalizer: TaskVerbalizer,
        metric: Metric,
        split: FewShotSplit,
        model: &FrozenModel,
        p0: &PromptMatrix,
        intrinsic_dim: usize,
        shared_projection: bool,
        rng: &RngStream,
    ) -> Result<Self> {
        let id = dataset.task_id.clone();
        let stream = if shared_projection {
            "projection".to_string()
        } else {
            format!("projection:{id}")
        };
        let projection = SubspaceProjection::random(&mut rng.derive(&stream), p0.values().data().to_vec(), intrinsic_dim)?;
        let prep = |xs: &[crate::data::FewShotExample]| -> Result<Vec<Item>> {
            xs.iter().map(|ex| Item::from_example(ex, &verbalizer, model.vocab())).collect()
        };
        let train_items = prep(&split.train)?;
        let dev_items = prep(&split.dev)?;
        if train_items.is_empty() {
            return Err(Error::Sampling(format!("task {id} has an empty few-shot training set")));
        }
        Ok(Self {
            dataset,
            verbalizer,
            metric,
            split,
            projection,
            prompt: PromptState::Untrained,
            z_reads: AtomicUsize::new(0),
            train_items,
            dev_items,
        })
    }

    pub fn id(&self) -> &str {
        &self.dataset.task_id
    }

    pub fn projection(&self) -> &SubspaceProjection {
        &self.projection
    }

    pub fn train_items(&self) -> &[Item] {
        &self.train_items
    }

    /// Dev items, falling back to the training items when the split has no dev set.
    pub fn dev_items(&self) -> &[Item] {
        if self.dev_items.is_empty() {
            &self.train_items
        } else {
            &self.dev_items
        }
    }

    pub fn is_trained(&self) -> bool {
        !matches!(self.prompt, PromptState::Untrained)
    }

    /// True when the last stage ran without budget.
    pub fn is_untrained_zero(&self) -> bool {
        matches!(self.prompt, PromptState::ZeroBudget(_))
    }

    pub fn prompt_state(&self) -> &PromptState {
        &self.prompt
    }

    pub(crate) fn set_prompt(&mut self, state: PromptState) {
        self.prompt = state;
    }

    /// The trained vector. Every call is counted.
    pub fn z(&self) -> Result<&[f64]> {
        self.z_reads.fetch_add(1, Ordering::Relaxed);
        match &self.prompt {
            PromptState::Trained(z) | PromptState::ZeroBudget(z) => Ok(z),
            PromptState::Untrained => Err(Error::Training(format!("task {} has no trained prompt", self.id()))),
        }
    }

    pub fn z_reads(&self) -> usize {
        self.z_reads.load(Ordering::Relaxed)
    }

    /// `reshape(A·z + p₀)` for the trained `z`.
    pub fn task_prompt(&self, n: usize, d: usize) -> Result<PromptMatrix> {
        project_prompt(&self.projection, self.z()?, n, d)
    }
}
