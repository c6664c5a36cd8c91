//! Shared setup for the examples: the shipped synthetic suite and a frozen
//! model, either loaded from a checkpoint given on the command line or
//! pretrained briefly at a reduced size.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ctpt::data::synthetic::{GeneratedSuite, SuiteConfig};
use ctpt::frozen_model::{FrozenModel, ModelConfig, PretrainConfig};
use ctpt::numerics::RngStream;
use ctpt::pipeline::{Pipeline, PipelineConfig, PromptConfig, StageConfig, TaskBundle};

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub struct Setup {
    pub suite_cfg: SuiteConfig,
    pub suite: GeneratedSuite,
    pub model: FrozenModel,
}

pub fn quick_pretrain() -> PretrainConfig {
    PretrainConfig {
        model: ModelConfig {
            d_model: 32,
            layers: 1,
            heads: 2,
            ff_dim: 64,
            max_len: 96,
        },
        steps: 150,
        batch_size: 16,
        log_every: 50,
        ..PretrainConfig::default()
    }
}

pub fn setup() -> ctpt::Result<Setup> {
    let suite_cfg = SuiteConfig::from_file(&configs().join("suite.toml"))?;
    let suite = GeneratedSuite::generate(&suite_cfg)?;
    let model = match std::env::args().nth(1) {
        Some(path) => FrozenModel::load(Path::new(&path))?,
        None => ctpt::cli::pretrain_on_suite(1, &suite_cfg, &suite, &quick_pretrain())?,
    };
    Ok(Setup { suite_cfg, suite, model })
}

/// Small budgets so that every example finishes in seconds.
pub fn small_config() -> PipelineConfig {
    PipelineConfig {
        k_shot: 4,
        prompt: PromptConfig {
            tokens: 6,
            prompt_dim: 40,
            attention_dim: 40,
            ..PromptConfig::default()
        },
        tspt: StageConfig {
            budget: 120,
            ..StageConfig::default()
        },
        ctpt: StageConfig {
            budget: 120,
            sigma0: 0.5,
            ..StageConfig::default()
        },
        ..PipelineConfig::default()
    }
}

impl Setup {
    pub fn pipeline(&self, cfg: PipelineConfig) -> ctpt::Result<Pipeline<'_>> {
        let ids: Vec<&str> = self.suite_cfg.tasks.iter().map(|t| t.id.as_str()).collect();
        let union = self.suite_cfg.verbalizer_config().union_for(&ids, self.model.vocab())?;
        Pipeline::new(&self.model, cfg, Some(union))
    }

    pub fn bundle(&self, pipe: &Pipeline<'_>, id: &str, rng: &RngStream) -> ctpt::Result<TaskBundle> {
        let verb = self.suite_cfg.verbalizer_config().task_verbalizer(id, self.model.vocab())?;
        let spec = self.suite_cfg.task(id).expect("task in suite");
        pipe.bundle(self.suite.task(id).expect("generated").clone(), verb, spec.metric, rng)
    }

    pub fn trained(&self, pipe: &Pipeline<'_>, id: &str, rng: &RngStream) -> ctpt::Result<TaskBundle> {
        let mut b = self.bundle(pipe, id, rng)?;
        pipe.train_tspt(&mut b, rng)?;
        Ok(b)
    }
}
