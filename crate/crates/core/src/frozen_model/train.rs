use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transformer::{backward, forward_train, ModelConfig, Params};
use super::{FrozenModel, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, softmax_in_place, Matrix, RngStream};

/// A pretraining sequence with exactly one `[MASK]` and the id it hides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub tokens: Vec<usize>,
    pub target: usize,
}

impl MaskedSequence {
    pub fn mask_position(&self) -> Option<usize> {
        self.tokens.iter().position(|&t| t == Vocabulary::MASK_ID)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub log_every: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            steps: 1500,
            batch_size: 32,
            learning_rate: 2e-3,
            warmup_steps: 100,
            grad_clip: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            log_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub steps: usize,
    pub batch_size: usize,
    pub corpus_size: usize,
    pub final_loss: f64,
}

fn sequence_grad(p: &Params, cfg: &ModelConfig, model: &FrozenModel, seq: &MaskedSequence) -> (f64, Params) {
    let row = seq.mask_position().expect("validated");
    let empty = Matrix::zeros(0, cfg.d_model);
    let (x0, valid) = model.embed_input(&empty, &seq.tokens);
    let (logits, cache) = forward_train(p, cfg, x0, &valid, row);
    let loss = log_sum_exp(&logits) - logits[seq.target];
    let mut dl = logits;
    softmax_in_place(&mut dl, 1.0);
    dl[seq.target] -= 1.0;
    let mut g = p.zeros_like();
    let dx = backward(p, cfg, &cache, &valid, row, &dl, &mut g);
    for (r, &t) in seq.tokens.iter().enumerate() {
        if valid[r] {
            for (o, &v) in g.embed.row_mut(t).iter_mut().zip(dx.row(r)) {
                *o += v;
            }
        }
    }
    (loss, g)
}

/// Trains a fresh model on the masked-slot objective and returns it frozen.
pub fn pretrain(vocab: Vocabulary, corpus: &[MaskedSequence], cfg: &PretrainConfig, rng: &mut RngStream) -> Result<FrozenModel> {
    if corpus.is_empty() {
        return Err(Error::Argument("pretraining corpus is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    for (i, s) in corpus.iter().enumerate() {
        let masks = s.tokens.iter().filter(|&&t| t == Vocabulary::MASK_ID).count();
        if masks != 1 {
            return Err(Error::Argument(format!("sequence {i} has {masks} masks, expected 1")));
        }
        if s.tokens.len() > cfg.model.max_len {
            return Err(Error::Argument(format!("sequence {i} exceeds max_len")));
        }
        if s.target >= vocab.len() || s.tokens.iter().any(|&t| t >= vocab.len()) {
            return Err(Error::Argument(format!("sequence {i} references unknown token ids")));
        }
    }
    let mut init_rng = rng.derive("init");
    let mut model = FrozenModel::initialize(vocab, cfg.model, &mut init_rng)?;
    let mut freq = vec![0u64; model.vocab().len()];
    for s in corpus {
        for &t in &s.tokens {
            freq[t] += 1;
        }
        freq[s.target] += 1;
    }
    model.vocab.set_frequencies(freq)?;

    let mcfg = cfg.model;
    let mut m1 = model.params.zeros_like();
    let mut m2 = model.params.zeros_like();
    let mut batch_rng = rng.derive("batches");
    let mut running = f64::NAN;
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| batch_rng.below(corpus.len())).collect();
        let params = &model.params;
        let results: Vec<(f64, Params)> = idx.par_iter().map(|&i| sequence_grad(params, &mcfg, &model, &corpus[i])).collect();
        let mut grad = model.params.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            for ((_, acc), (_, gi)) in grad.named_mut().into_iter().zip(g.named()) {
                acc.add_assign(gi).expect("same shapes");
            }
        }
        drop(results);
        let inv_b = 1.0 / cfg.batch_size as f64;
        loss *= inv_b;
        running = if running.is_nan() { loss } else { 0.95 * running + 0.05 * loss };
        let mut norm2 = 0.0;
        for (name, g) in grad.named_mut() {
            if name == "pos" {
                g.data_mut().iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            g.scale_in_place(inv_b);
            norm2 += g.data().iter().map(|v| v * v).sum::<f64>();
        }
        let clip = if norm2.sqrt() > cfg.grad_clip {
            cfg.grad_clip / norm2.sqrt()
        } else {
            1.0
        };
        let lr = schedule(cfg, step);
        let t = (step + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let params = model.params_mut()?;
        let tensors = params
            .named_mut()
            .into_iter()
            .zip(grad.named())
            .zip(m1.named_mut().into_iter().zip(m2.named_mut()));
        for (((name, w), (_, g)), ((_, a), (_, b))) in tensors {
            if name == "pos" {
                continue;
            }
            let (w, g, a, b) = (w.data_mut(), g.data(), a.data_mut(), b.data_mut());
            for i in 0..w.len() {
                let gi = g[i] * clip;
                a[i] = cfg.beta1 * a[i] + (1.0 - cfg.beta1) * gi;
                b[i] = cfg.beta2 * b[i] + (1.0 - cfg.beta2) * gi * gi;
                w[i] -= lr * (a[i] / c1) / ((b[i] / c2).sqrt() + 1e-8);
            }
        }
        if !loss.is_finite() {
            return Err(Error::Training(format!("pretraining loss diverged at step {step}")));
        }
        if cfg.log_every > 0 && (step + 1) % cfg.log_every == 0 {
            log::info!("pretrain step {}/{}: loss {:.4}", step + 1, cfg.steps, running);
        }
    }
    model.set_summary(PretrainSummary {
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        corpus_size: corpus.len(),
        final_loss: running,
    });
    Ok(model.freeze())
}

/// Linear warmup followed by linear decay to 10% of the peak rate.
fn schedule(cfg: &PretrainConfig, step: usize) -> f64 {
    let peak = cfg.learning_rate;
    if step < cfg.warmup_steps {
        return peak * (step + 1) as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.steps.saturating_sub(cfg.warmup_steps).max(1) as f64;
    let frac = (step - cfg.warmup_steps) as f64 / span;
    peak * (1.0 - 0.9 * frac)
}
