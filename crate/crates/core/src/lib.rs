//! Cross-task prompt tuning for emotion recognition in conversation, over a
//! small frozen masked language model trained on a synthetic corpus.

pub mod cli;
pub mod cmaes;
pub mod data;
pub mod error;
pub mod frozen_model;
pub mod numerics;
pub mod pipeline;
pub mod prompt_engine;
pub mod verbalizer;

pub use error::{Error, Result};
