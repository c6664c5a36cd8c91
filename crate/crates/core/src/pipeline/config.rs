use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer settings for one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    /// Candidate evaluations on the few-shot training set.
    pub budget: usize,
    pub sigma0: f64,
    pub population: Option<usize>,
    /// Evaluate the generation's best candidate on dev every this many generations.
    pub dev_every: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            budget: 3000,
            sigma0: 1.0,
            population: None,
            dev_every: 1,
        }
    }
}

impl StageConfig {
    pub fn validate(&self, stage: &str) -> Result<()> {
        if self.sigma0.is_nan() || self.sigma0 <= 0.0 {
            return Err(Error::Config(format!("{stage}: sigma0 must be positive")));
        }
        if self.dev_every == 0 {
            return Err(Error::Config(format!("{stage}: dev_every must be at least 1")));
        }
        if self.population.is_some_and(|p| p < 2) {
            return Err(Error::Config(format!("{stage}: population must be at least 2")));
        }
        Ok(())
    }
}

/// Sizes of the prompt and of the three intrinsic spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub tokens: usize,
    pub prompt_dim: usize,
    /// Every task draws the same prompt projection instead of its own.
    pub shared_projection: bool,
    pub attention_dim: usize,
    /// Defaults to the prompt length.
    pub gate_dim: Option<usize>,
    pub heads: usize,
    /// Query and key offsets start at this multiple of the identity.
    pub attention_anchor: f64,
    /// Standard deviation of the noise added to the identity-anchored offsets.
    pub attention_noise: f64,
    /// Logit offset of the few-shot gate; 0 starts every gate at 0.5.
    pub gate_offset: f64,
    /// Logit offset of the gate in zero-shot transfer, where the task side is p₀.
    pub transfer_gate_offset: f64,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            tokens: 10,
            prompt_dim: 200,
            shared_projection: false,
            attention_dim: 200,
            gate_dim: None,
            heads: 4,
            attention_anchor: 1.0,
            attention_noise: 0.01,
            gate_offset: 0.0,
            transfer_gate_offset: 0.0,
        }
    }
}

impl PromptConfig {
    pub fn gate_dim(&self) -> usize {
        self.gate_dim.unwrap_or(self.tokens)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens < 2 {
            return Err(Error::Config("prompt needs at least 2 tokens (the last one is [UNK])".into()));
        }
        if self.prompt_dim == 0 || self.attention_dim == 0 || self.gate_dim() == 0 || self.heads == 0 {
            return Err(Error::Config("intrinsic dimensions and head count must be positive".into()));
        }
        if !(self.attention_anchor > 0.0 && self.attention_anchor.is_finite()) {
            return Err(Error::Config("attention_anchor must be positive".into()));
        }
        if !(self.gate_offset.is_finite() && self.transfer_gate_offset.is_finite()) {
            return Err(Error::Config("gate offsets must be finite".into()));
        }
        if self.attention_noise < 0.0 {
            return Err(Error::Config("attention_noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Learnable parameters of the cross-task stages.
    pub fn ctpt_learnables(&self) -> usize {
        self.attention_dim + self.gate_dim()
    }
}

/// How the cross-task stage explores `[z′; z″]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtptSchedule {
    /// One optimizer over the concatenation.
    #[default]
    Joint,
    /// Attention first with the gate at its offset, then the gate alone.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_shot: usize,
    pub prompt: PromptConfig,
    pub tspt: StageConfig,
    pub ctpt: StageConfig,
    pub schedule: CtptSchedule,
    /// Decode through the union verbalizer during the cross-task stage.
    pub emotional_knowledge: bool,
    /// Pin the gate to all ones so the combined prompt is the task prompt.
    pub force_gate_ones: bool,
    /// Worker threads for candidate evaluation; `None` uses all cores.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_shot: 16,
            prompt: PromptConfig::default(),
            tspt: StageConfig::default(),
            ctpt: StageConfig {
                sigma0: 0.5,
                ..StageConfig::default()
            },
            schedule: CtptSchedule::Joint,
            emotional_knowledge: true,
            force_gate_ones: false,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_shot == 0 {
            return Err(Error::Config("k_shot must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.prompt.validate()?;
        self.tspt.validate("tspt")?;
        self.ctpt.validate("ctpt")
    }
}
