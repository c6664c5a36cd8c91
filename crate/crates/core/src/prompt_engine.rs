//! Soft prompts in low-dimensional subspaces, cross-task attention over
//! source prompts, the per-token observation gate, and the pattern that turns
//! a prompt plus a conversation into model input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frozen_model::{EncodedInput, FrozenModel, Vocabulary};
use crate::numerics::{dot, sigmoid, softmax_in_place, Matrix, RngRecord, RngStream};

/// Fixed affine map `z ↦ A·z + offset` from an intrinsic space into a larger
/// parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceProjection {
    a: Matrix,
    offset: Vec<f64>,
    rng: RngRecord,
}

impl SubspaceProjection {
    /// Draws `A` with entries `N(0, 1/sqrt(intrinsic_dim))`.
    pub fn random(rng: &mut RngStream, offset: Vec<f64>, intrinsic_dim: usize) -> Result<Self> {
        if intrinsic_dim == 0 || offset.is_empty() {
            return Err(Error::Config("projection dimensions must be positive".into()));
        }
        let record = rng.record();
        let a = Matrix::gaussian(rng, offset.len(), intrinsic_dim, 1.0 / (intrinsic_dim as f64).sqrt())?;
        Ok(Self { a, offset, rng: record })
    }

    pub fn from_parts(a: Matrix, offset: Vec<f64>) -> Result<Self> {
        if a.rows() != offset.len() {
            return Err(Error::shape(
                "SubspaceProjection::from_parts",
                format!("A rows {}", a.rows()),
                format!("offset {}", offset.len()),
            ));
        }
        Ok(Self {
            a,
            offset,
            rng: RngRecord::unseeded(),
        })
    }

    pub fn target_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn rng_record(&self) -> &RngRecord {
        &self.rng
    }

    /// `A·z` without the offset.
    pub fn linear(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.intrinsic_dim() {
            return Err(Error::shape(
                "SubspaceProjection::project",
                format!("intrinsic dim {}", self.intrinsic_dim()),
                format!("z of length {}", z.len()),
            ));
        }
        self.a.matvec(z)
    }

    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.linear(z)?;
        for (x, o) in v.iter_mut().zip(&self.offset) {
            *x += o;
        }
        Ok(v)
    }
}

/// An n×d block of continuous prompt embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptMatrix(Matrix);

impl PromptMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::Argument("a prompt needs at least one row".into()));
        }
        if !values.is_finite() {
            return Err(Error::Argument("prompt contains non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn d(&self) -> usize {
        self.0.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Query, key and value maps for cross-task attention.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub heads: usize,
}

impl AttentionParams {
    pub fn new(wq: Matrix, wk: Matrix, wv: Matrix, heads: usize) -> Result<Self> {
        let d = wq.rows();
        for (name, w) in [("W^Q", &wq), ("W^K", &wk), ("W^V", &wv)] {
            if w.shape() != (d, d) {
                return Err(Error::shape(
                    "AttentionParams::new",
                    format!("{d}x{d}"),
                    format!("{name} {:?}", w.shape()),
                ));
            }
        }
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!("embed dim {d} is not divisible by {heads} heads")));
        }
        Ok(Self { wq, wk, wv, heads })
    }

    pub fn d(&self) -> usize {
        self.wq.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.d() / self.heads
    }
}

/// Per-token mixing weights in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateVector(Vec<f64>);

impl GateVector {
    pub fn new(g: Vec<f64>) -> Result<Self> {
        if g.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument("gate components must lie in [0, 1]".into()));
        }
        Ok(Self(g))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len().max(1) as f64
    }
}

/// `reshape(A·z + p₀)` as an n×d prompt.
pub fn project_prompt(proj: &SubspaceProjection, z: &[f64], n: usize, d: usize) -> Result<PromptMatrix> {
    if proj.target_dim() != n * d {
        return Err(Error::shape(
            "project_prompt",
            format!("target dim {}", proj.target_dim()),
            format!("{n}x{d} prompt"),
        ));
    }
    PromptMatrix::new(Matrix::from_vec(n, d, proj.project(z)?)?)
}

/// Splits `A′·z′` into three row-major d×d blocks (Q, K, V order) and adds the
/// fixed offsets carried by the projection.
pub fn unpack_attention(proj: &SubspaceProjection, z: &[f64], d: usize, heads: usize) -> Result<AttentionParams> {
    let block = d * d;
    if proj.target_dim() != 3 * block {
        return Err(Error::Config(format!(
            "attention projection must target 3·d² = {} coordinates, not {}",
            3 * block,
            proj.target_dim()
        )));
    }
    let w = proj.project(z)?;
    let take = |i: usize| Matrix::from_vec(d, d, w[i * block..(i + 1) * block].to_vec());
    AttentionParams::new(take(0)?, take(1)?, take(2)?, heads)
}

/// Identity-anchored attention offsets `W₀`: query and key start at
/// `anchor·I`, value at `I/(heads·sources)` so that summing heads and sources
/// averages the attended source rows. Small Gaussian noise is added to every
/// block. Larger anchors sharpen the initial attention of a prompt row onto
/// the most similar source rows.
pub fn attention_offsets(d: usize, heads: usize, sources: usize, anchor: f64, noise: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if sources == 0 || heads == 0 {
        return Err(Error::Argument("attention offsets need at least one source and one head".into()));
    }
    let mut out = Vec::with_capacity(3 * d * d);
    let v_scale = 1.0 / (heads * sources) as f64;
    for diag in [anchor, anchor, v_scale] {
        for r in 0..d {
            for c in 0..d {
                let base = if r == c { diag } else { 0.0 };
                let eps = if noise > 0.0 { noise * rng.normal() } else { 0.0 };
                out.push(base + eps);
            }
        }
    }
    Ok(out)
}

/// Attention of the target prompt over one source prompt, summed over heads.
fn attend_one(target_q: &Matrix, source: &Matrix, params: &AttentionParams, out: &mut Matrix) -> Result<()> {
    let k = source.matmul(&params.wk)?;
    let v = source.matmul(&params.wv)?;
    let dh = params.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut w = vec![0.0; source.rows()];
    for h in 0..params.heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..target_q.rows() {
            let qi = &target_q.row(i)[cols.clone()];
            for (j, wj) in w.iter_mut().enumerate() {
                *wj = dot(qi, &k.row(j)[cols.clone()]);
            }
            softmax_in_place(&mut w, scale);
            let orow = out.row_mut(i);
            for (j, &wj) in w.iter().enumerate() {
                for (o, &vv) in orow.iter_mut().zip(v.row(j)) {
                    *o += wj * vv;
                }
            }
        }
    }
    Ok(())
}

/// Per-head, per-source attention weights of the target over each source
/// (diagnostics and tests).
pub fn attention_weights(target: &PromptMatrix, source: &PromptMatrix, params: &AttentionParams) -> Result<Vec<Matrix>> {
    let q = target.values().matmul(&params.wq)?;
    let k = source.values().matmul(&params.wk)?;
    let dh = params.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    (0..params.heads)
        .map(|h| {
            let cols = h * dh..(h + 1) * dh;
            let mut m = Matrix::zeros(target.n(), source.n());
            for i in 0..target.n() {
                for j in 0..source.n() {
                    m.set(i, j, dot(&q.row(i)[cols.clone()], &k.row(j)[cols.clone()]));
                }
                softmax_in_place(m.row_mut(i), scale);
            }
            Ok(m)
        })
        .collect()
}

/// `p_c = Σ_sources Σ_heads softmax(Q Kᵀ/√d_head) V` with the query taken from
/// the target prompt and keys/values from each source.
pub fn cross_task_attend(target: &PromptMatrix, sources: &[&PromptMatrix], params: &AttentionParams) -> Result<PromptMatrix> {
    if sources.is_empty() {
        return Err(Error::Argument("cross-task attention needs at least one source prompt".into()));
    }
    if target.d() != params.d() {
        return Err(Error::shape(
            "cross_task_attend",
            format!("prompt width {}", target.d()),
            format!("attention dim {}", params.d()),
        ));
    }
    for s in sources {
        if (s.n(), s.d()) != (target.n(), target.d()) {
            return Err(Error::shape(
                "cross_task_attend",
                format!("target {}x{}", target.n(), target.d()),
                format!("source {}x{}", s.n(), s.d()),
            ));
        }
    }
    let q = target.values().matmul(&params.wq)?;
    let mut out = Matrix::zeros(target.n(), target.d());
    for s in sources {
        attend_one(&q, s.values(), params, &mut out)?;
    }
    PromptMatrix::new(out)
}

/// Row k of the result is `g[k]·p_t[k] + (1 − g[k])·p_c[k]`.
pub fn gate_combine(g: &GateVector, pt: &PromptMatrix, pc: &PromptMatrix) -> Result<PromptMatrix> {
    if (pt.n(), pt.d()) != (pc.n(), pc.d()) {
        return Err(Error::shape(
            "gate_combine",
            format!("p_t {}x{}", pt.n(), pt.d()),
            format!("p_c {}x{}", pc.n(), pc.d()),
        ));
    }
    if g.len() != pt.n() {
        return Err(Error::shape(
            "gate_combine",
            format!("{} prompt rows", pt.n()),
            format!("gate of length {}", g.len()),
        ));
    }
    let mut out = Matrix::zeros(pt.n(), pt.d());
    for (k, &gk) in g.values().iter().enumerate() {
        if gk == 1.0 {
            out.row_mut(k).copy_from_slice(pt.values().row(k));
            continue;
        }
        for ((o, &a), &b) in out.row_mut(k).iter_mut().zip(pt.values().row(k)).zip(pc.values().row(k)) {
            *o = gk * a + (1.0 - gk) * b;
        }
    }
    PromptMatrix::new(out)
}

/// `sigmoid(A″·z″ + g₀)`.
pub fn project_gate(proj: &SubspaceProjection, z: &[f64]) -> Result<GateVector> {
    let pre = proj.project(z)?;
    Ok(GateVector(pre.into_iter().map(sigmoid).collect()))
}

/// Embeddings of the `n` most frequent ordinary tokens, one per row.
pub fn initial_prompt(model: &FrozenModel, n: usize) -> Result<PromptMatrix> {
    let ids = model.vocab().most_frequent(n);
    if ids.len() < n {
        return Err(Error::Config(format!("vocabulary has fewer than {n} ordinary tokens")));
    }
    PromptMatrix::new(model.embedding_rows(&ids))
}

/// Joins utterances with `[SEP]`, appends `[MASK]`, prepends the prompt with
/// its last row replaced by the `[UNK]` embedding. When the result would
/// exceed the model's length limit, the oldest utterances are dropped first;
/// the mask always survives.
pub fn build_pattern(prompt: &PromptMatrix, utterances: &[Vec<usize>], model: &FrozenModel) -> Result<EncodedInput> {
    if utterances.is_empty() || utterances.iter().all(Vec::is_empty) {
        return Err(Error::Argument("cannot build a pattern from an empty conversation".into()));
    }
    if prompt.d() != model.d_model() {
        return Err(Error::shape(
            "build_pattern",
            format!("prompt width {}", prompt.d()),
            format!("d_model {}", model.d_model()),
        ));
    }
    let budget = model
        .config()
        .max_len
        .checked_sub(prompt.n() + 1)
        .filter(|&b| b > 0)
        .ok_or_else(|| Error::Argument("prompt leaves no room for text".into()))?;
    // walk backwards keeping whole utterances while they fit
    let mut kept: Vec<&[usize]> = Vec::new();
    let mut used = 0;
    for u in utterances.iter().rev() {
        let cost = u.len() + usize::from(!kept.is_empty());
        if used + cost > budget {
            if kept.is_empty() {
                kept.push(&u[u.len() - budget..]);
                used = budget;
            }
            break;
        }
        used += cost;
        kept.push(u);
    }
    let mut tokens = Vec::with_capacity(used + 1);
    for (i, u) in kept.iter().rev().enumerate() {
        if i > 0 {
            tokens.push(Vocabulary::SEP_ID);
        }
        tokens.extend_from_slice(u);
    }
    tokens.push(Vocabulary::MASK_ID);
    let mut p = prompt.values().clone();
    let last = p.rows() - 1;
    p.row_mut(last).copy_from_slice(model.embedding(Vocabulary::UNK_ID));
    EncodedInput::new(p, tokens)
}
