//! Pre-LN encoder stack. Two code paths share the same parameters: a lean
//! inference path that only finishes the mask row in the last layer, and a
//! full path that keeps activations for backpropagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, softmax_in_place, Matrix, RngStream};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            layers: 2,
            heads: 4,
            ff_dim: 256,
            max_len: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.layers == 0 || self.heads == 0 || self.ff_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must be at least 2".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerParams {
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub wq: Matrix,
    pub bq: Matrix,
    pub wk: Matrix,
    pub bk: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
    pub wo: Matrix,
    pub bo: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl LayerParams {
    const NAMES: [&'static str; 16] = [
        "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2",
    ];

    fn tensors(&self) -> [&Matrix; 16] {
        [
            &self.ln1_g,
            &self.ln1_b,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2_g,
            &self.ln2_b,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 16] {
        [
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_g,
            &mut self.ln2_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Every parameter tensor of the encoder. Vectors are stored as 1×k matrices.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Params {
    pub embed: Matrix,
    pub pos: Matrix,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Matrix,
    pub lnf_b: Matrix,
    pub head: Matrix,
    pub head_b: Matrix,
}

/// Fixed sinusoidal position table, scaled down so it does not swamp the
/// token embeddings.
fn sinusoid(max_len: usize, d: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(max_len, d);
    for p in 0..max_len {
        for i in 0..d {
            let k = (i / 2) as f64;
            let angle = p as f64 / 10_000f64.powf(2.0 * k / d as f64);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            m.set(p, i, scale * v);
        }
    }
    m
}

impl Params {
    pub fn init(cfg: &ModelConfig, vocab_size: usize, rng: &mut RngStream) -> Result<Self> {
        let d = cfg.d_model;
        let ff = cfg.ff_dim;
        let ones = |n| Matrix::filled(1, n, 1.0);
        let zeros = |n| Matrix::zeros(1, n);
        let resid = 1.0 / ((2 * cfg.layers) as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let s = 1.0 / (d as f64).sqrt();
            layers.push(LayerParams {
                ln1_g: ones(d),
                ln1_b: zeros(d),
                wq: Matrix::gaussian(rng, d, d, s)?,
                bq: zeros(d),
                wk: Matrix::gaussian(rng, d, d, s)?,
                bk: zeros(d),
                wv: Matrix::gaussian(rng, d, d, s)?,
                bv: zeros(d),
                wo: Matrix::gaussian(rng, d, d, s * resid)?,
                bo: zeros(d),
                ln2_g: ones(d),
                ln2_b: zeros(d),
                w1: Matrix::gaussian(rng, d, ff, s)?,
                b1: zeros(ff),
                w2: Matrix::gaussian(rng, ff, d, resid / (ff as f64).sqrt())?,
                b2: zeros(d),
            });
        }
        Ok(Params {
            embed: Matrix::gaussian(rng, vocab_size, d, 0.3)?,
            pos: sinusoid(cfg.max_len, d, 0.1),
            layers,
            lnf_g: ones(d),
            lnf_b: zeros(d),
            head: Matrix::gaussian(rng, d, vocab_size, 1.0 / (d as f64).sqrt())?,
            head_b: zeros(vocab_size),
        })
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("embed".to_string(), &self.embed), ("pos".to_string(), &self.pos)];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in LayerParams::NAMES.iter().zip(l.tensors()) {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("lnf_g".into(), &self.lnf_g));
        out.push(("lnf_b".into(), &self.lnf_b));
        out.push(("head".into(), &self.head));
        out.push(("head_b".into(), &self.head_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![("embed".to_string(), &mut self.embed), ("pos".to_string(), &mut self.pos)];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, t) in LayerParams::NAMES.iter().zip(l.tensors_mut()) {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("lnf_g".into(), &mut self.lnf_g));
        out.push(("lnf_b".into(), &mut self.lnf_b));
        out.push(("head".into(), &mut self.head));
        out.push(("head_b".into(), &mut self.head_b));
        out
    }

    pub fn zeros_like(&self) -> Params {
        let mut z = self.clone();
        for (_, t) in z.named_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    /// Rebuilds parameters from named records, checking names and shapes
    /// against a freshly shaped template.
    pub fn from_records(template: Params, records: Vec<(String, Matrix)>) -> Result<Params> {
        let mut p = template;
        let mut named = p.named_mut();
        if named.len() != records.len() {
            return Err(Error::Format(format!(
                "expected {} parameter records, found {}",
                named.len(),
                records.len()
            )));
        }
        for ((name, slot), (rname, m)) in named.iter_mut().zip(records) {
            if *name != rname {
                return Err(Error::Format(format!("expected record {name}, found {rname}")));
            }
            if slot.shape() != m.shape() {
                return Err(Error::Format(format!(
                    "record {name} has shape {:?}, expected {:?}",
                    m.shape(),
                    slot.shape()
                )));
            }
            **slot = m;
        }
        drop(named);
        Ok(p)
    }
}

// ---------------------------------------------------------------------------
// primitives

fn layer_norm_row(x: &[f64], g: &[f64], b: &[f64], out: &mut [f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * inv * g[i] + b[i];
    }
    (mean, inv)
}

fn layer_norm(x: &Matrix, g: &Matrix, b: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let mut y = Matrix::zeros(x.rows(), x.cols());
    let mut means = Vec::with_capacity(x.rows());
    let mut invs = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let (m, inv) = layer_norm_row(x.row(r), g.data(), b.data(), y.row_mut(r));
        means.push(m);
        invs.push(inv);
    }
    (y, means, invs)
}

/// x·w + b with the bias broadcast over rows.
fn linear(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), w.cols());
    for r in 0..x.rows() {
        out.row_mut(r).copy_from_slice(b.data());
    }
    matmul_acc(x.data(), w.data(), out.data_mut(), x.rows(), x.cols(), w.cols());
    out
}

fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

/// Attention for the query rows in `q` against all keys; `valid[j]` false
/// masks key j. Returns the concatenated head outputs and, if asked, the
/// per-head probability rows.
fn attend(q: &Matrix, k: &Matrix, v: &Matrix, valid: &[bool], heads: usize, mut probs: Option<&mut Vec<Matrix>>) -> Matrix {
    let (nq, d) = q.shape();
    let nk = k.rows();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Matrix::zeros(nq, d);
    let mut scores = vec![0.0; nk];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut p_h = probs.as_ref().map(|_| Matrix::zeros(nq, nk));
        for i in 0..nq {
            let qi = &q.row(i)[cols.clone()];
            for j in 0..nk {
                scores[j] = if valid[j] {
                    dot(qi, &k.row(j)[cols.clone()])
                } else {
                    f64::NEG_INFINITY
                };
            }
            softmax_in_place(&mut scores, scale);
            let orow = &mut out.row_mut(i)[cols.clone()];
            for (j, &w) in scores.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (o, &vv) in orow.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *o += w * vv;
                }
            }
            if let Some(p) = p_h.as_mut() {
                p.row_mut(i).copy_from_slice(&scores);
            }
        }
        if let (Some(store), Some(p)) = (probs.as_deref_mut(), p_h) {
            store.push(p);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// inference

/// Runs the stack over `x0` (rows already embedded, positions added) and
/// returns the final-normalized hidden state of `row`.
pub(crate) fn encode_row(p: &Params, cfg: &ModelConfig, x0: Matrix, valid: &[bool], row: usize) -> Vec<f64> {
    let mut x = x0;
    let last = p.layers.len() - 1;
    for (li, l) in p.layers.iter().enumerate() {
        let (a, _, _) = layer_norm(&x, &l.ln1_g, &l.ln1_b);
        let k = linear(&a, &l.wk, &l.bk);
        let v = linear(&a, &l.wv, &l.bv);
        if li < last {
            let q = linear(&a, &l.wq, &l.bq);
            let o = attend(&q, &k, &v, valid, cfg.heads, None);
            let o = linear(&o, &l.wo, &l.bo);
            x.add_assign(&o).expect("residual shapes agree");
            let (c, _, _) = layer_norm(&x, &l.ln2_g, &l.ln2_b);
            let mut u = linear(&c, &l.w1, &l.b1);
            u.data_mut().iter_mut().for_each(|t| *t = gelu(*t));
            let y = linear(&u, &l.w2, &l.b2);
            x.add_assign(&y).expect("residual shapes agree");
        } else {
            let a_row = a.slice_rows(row, row + 1);
            let q = linear(&a_row, &l.wq, &l.bq);
            let o = attend(&q, &k, &v, valid, cfg.heads, None);
            let o = linear(&o, &l.wo, &l.bo);
            let mut xr = x.slice_rows(row, row + 1);
            xr.add_assign(&o).expect("residual shapes agree");
            let (c, _, _) = layer_norm(&xr, &l.ln2_g, &l.ln2_b);
            let mut u = linear(&c, &l.w1, &l.b1);
            u.data_mut().iter_mut().for_each(|t| *t = gelu(*t));
            let y = linear(&u, &l.w2, &l.b2);
            xr.add_assign(&y).expect("residual shapes agree");
            x = xr;
        }
    }
    let mut h = vec![0.0; cfg.d_model];
    layer_norm_row(x.row(0), p.lnf_g.data(), p.lnf_b.data(), &mut h);
    h
}

/// Output-head logits for the given hidden state, all tokens.
pub(crate) fn head_logits(p: &Params, h: &[f64]) -> Vec<f64> {
    let mut out = p.head_b.data().to_vec();
    matmul_acc(h, p.head.data(), &mut out, 1, h.len(), p.head.cols());
    out
}

/// Output-head logits restricted to `ids`, in that order.
pub(crate) fn head_logits_for(p: &Params, h: &[f64], ids: &[usize]) -> Vec<f64> {
    let vsz = p.head.cols();
    let w = p.head.data();
    ids.iter()
        .map(|&t| {
            let mut s = p.head_b.data()[t];
            for (i, &hv) in h.iter().enumerate() {
                s += hv * w[i * vsz + t];
            }
            s
        })
        .collect()
}

// ---------------------------------------------------------------------------
// training path

struct LayerCache {
    x_in: Matrix,
    a: Matrix,
    ln1_mean: Vec<f64>,
    ln1_inv: Vec<f64>,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    att: Matrix,
    x1: Matrix,
    c: Matrix,
    ln2_mean: Vec<f64>,
    ln2_inv: Vec<f64>,
    u: Matrix,
    f: Matrix,
}

pub(crate) struct TrainCache {
    layers: Vec<LayerCache>,
    x_final: Vec<f64>,
    hf: Vec<f64>,
    lnf_mean: f64,
    lnf_inv: f64,
}

/// Full forward keeping activations; returns logits over the vocabulary at `row`.
pub(crate) fn forward_train(p: &Params, cfg: &ModelConfig, x0: Matrix, valid: &[bool], row: usize) -> (Vec<f64>, TrainCache) {
    let mut x = x0;
    let mut caches = Vec::with_capacity(p.layers.len());
    for l in &p.layers {
        let x_in = x.clone();
        let (a, ln1_mean, ln1_inv) = layer_norm(&x, &l.ln1_g, &l.ln1_b);
        let q = linear(&a, &l.wq, &l.bq);
        let k = linear(&a, &l.wk, &l.bk);
        let v = linear(&a, &l.wv, &l.bv);
        let mut probs = Vec::with_capacity(cfg.heads);
        let att = attend(&q, &k, &v, valid, cfg.heads, Some(&mut probs));
        let o = linear(&att, &l.wo, &l.bo);
        let x1 = x_in.add(&o).expect("residual shapes agree");
        let (c, ln2_mean, ln2_inv) = layer_norm(&x1, &l.ln2_g, &l.ln2_b);
        let u = linear(&c, &l.w1, &l.b1);
        let mut f = u.clone();
        f.data_mut().iter_mut().for_each(|t| *t = gelu(*t));
        let y = linear(&f, &l.w2, &l.b2);
        x = x1.add(&y).expect("residual shapes agree");
        caches.push(LayerCache {
            x_in,
            a,
            ln1_mean,
            ln1_inv,
            q,
            k,
            v,
            probs,
            att,
            x1,
            c,
            ln2_mean,
            ln2_inv,
            u,
            f,
        });
    }
    let x_final = x.row(row).to_vec();
    let mut hf = vec![0.0; cfg.d_model];
    let (lnf_mean, lnf_inv) = layer_norm_row(&x_final, p.lnf_g.data(), p.lnf_b.data(), &mut hf);
    let logits = head_logits(p, &hf);
    (
        logits,
        TrainCache {
            layers: caches,
            x_final,
            hf,
            lnf_mean,
            lnf_inv,
        },
    )
}

/// Backward of layer norm for one row. Accumulates dg, db and returns dx.
fn layer_norm_backward_row(dy: &[f64], x: &[f64], mean: f64, inv: f64, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mut dxhat = vec![0.0; x.len()];
    let mut sum_dxhat = 0.0;
    let mut sum_dxhat_xhat = 0.0;
    for i in 0..x.len() {
        let xhat = (x[i] - mean) * inv;
        dg[i] += dy[i] * xhat;
        db[i] += dy[i];
        dxhat[i] = dy[i] * g[i];
        sum_dxhat += dxhat[i];
        sum_dxhat_xhat += dxhat[i] * xhat;
    }
    (0..x.len())
        .map(|i| {
            let xhat = (x[i] - mean) * inv;
            inv * (dxhat[i] - sum_dxhat / n - xhat * sum_dxhat_xhat / n)
        })
        .collect()
}

fn layer_norm_backward(dy: &Matrix, x: &Matrix, means: &[f64], invs: &[f64], g: &Matrix, dg: &mut Matrix, db: &mut Matrix) -> Matrix {
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = layer_norm_backward_row(dy.row(r), x.row(r), means[r], invs[r], g.data(), dg.data_mut(), db.data_mut());
        dx.row_mut(r).copy_from_slice(&row);
    }
    dx
}

/// Backward of `out = x·w + b`: accumulates dw, db and returns dx.
fn linear_backward(dout: &Matrix, x: &Matrix, w: &Matrix, dw: &mut Matrix, db: &mut Matrix) -> Matrix {
    // dw += xᵀ·dout
    let (m, k) = x.shape();
    let n = dout.cols();
    let dwd = dw.data_mut();
    for r in 0..m {
        let xr = x.row(r);
        let dr = dout.row(r);
        for i in 0..k {
            let xv = xr[i];
            if xv == 0.0 {
                continue;
            }
            let row = &mut dwd[i * n..(i + 1) * n];
            for (o, &dv) in row.iter_mut().zip(dr) {
                *o += xv * dv;
            }
        }
        for (o, &dv) in db.data_mut().iter_mut().zip(dr) {
            *o += dv;
        }
    }
    dout.matmul_transposed(w).expect("linear backward shapes agree")
}

/// Backpropagates `dlogits` (gradient of the loss w.r.t. the row logits)
/// into `grads`; returns the gradient with respect to the input rows `x0`.
pub(crate) fn backward(
    p: &Params,
    cfg: &ModelConfig,
    cache: &TrainCache,
    valid: &[bool],
    row: usize,
    dlogits: &[f64],
    grads: &mut Params,
) -> Matrix {
    let d = cfg.d_model;
    let vsz = p.head.cols();
    // head
    {
        let gh = grads.head.data_mut();
        for i in 0..d {
            let hv = cache.hf[i];
            for t in 0..vsz {
                gh[i * vsz + t] += hv * dlogits[t];
            }
        }
        for (o, &g) in grads.head_b.data_mut().iter_mut().zip(dlogits) {
            *o += g;
        }
    }
    let w = p.head.data();
    let dhf: Vec<f64> = (0..d).map(|i| dot(&w[i * vsz..(i + 1) * vsz], dlogits)).collect();
    let dx_row = layer_norm_backward_row(
        &dhf,
        &cache.x_final,
        cache.lnf_mean,
        cache.lnf_inv,
        p.lnf_g.data(),
        grads.lnf_g.data_mut(),
        grads.lnf_b.data_mut(),
    );
    let seq = cache.layers[0].x_in.rows();
    let mut dx = Matrix::zeros(seq, d);
    dx.row_mut(row).copy_from_slice(&dx_row);

    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    for (li, l) in p.layers.iter().enumerate().rev() {
        let c = &cache.layers[li];
        let g = &mut grads.layers[li];
        // feed-forward branch: x2 = x1 + w2(gelu(w1 c))
        let df = linear_backward(&dx, &c.f, &l.w2, &mut g.w2, &mut g.b2);
        let mut du = df;
        for (dv, &uv) in du.data_mut().iter_mut().zip(c.u.data()) {
            *dv *= gelu_grad(uv);
        }
        let dc = linear_backward(&du, &c.c, &l.w1, &mut g.w1, &mut g.b1);
        let dx1_ln = layer_norm_backward(&dc, &c.x1, &c.ln2_mean, &c.ln2_inv, &l.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        let mut dx1 = dx;
        dx1.add_assign(&dx1_ln).expect("shapes agree");
        // attention branch: x1 = x + wo(att)
        let datt = linear_backward(&dx1, &c.att, &l.wo, &mut g.wo, &mut g.bo);
        let mut dq = Matrix::zeros(seq, d);
        let mut dk = Matrix::zeros(seq, d);
        let mut dv = Matrix::zeros(seq, d);
        let mut dp = vec![0.0; seq];
        for h in 0..cfg.heads {
            let cols = h * dh..(h + 1) * dh;
            let probs = &c.probs[h];
            for i in 0..seq {
                let dout = &datt.row(i)[cols.clone()];
                let prow = probs.row(i);
                let mut sum = 0.0;
                for j in 0..seq {
                    dp[j] = if valid[j] { dot(dout, &c.v.row(j)[cols.clone()]) } else { 0.0 };
                    sum += dp[j] * prow[j];
                }
                for j in 0..seq {
                    let pj = prow[j];
                    if pj == 0.0 {
                        continue;
                    }
                    // dV_j += p_ij * dout_i
                    for (o, &gv) in dv.row_mut(j)[cols.clone()].iter_mut().zip(dout) {
                        *o += pj * gv;
                    }
                    let ds = pj * (dp[j] - sum) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj: Vec<f64> = c.k.row(j)[cols.clone()].to_vec();
                    for (o, &kv) in dq.row_mut(i)[cols.clone()].iter_mut().zip(&kj) {
                        *o += ds * kv;
                    }
                    let qi: Vec<f64> = c.q.row(i)[cols.clone()].to_vec();
                    for (o, &qv) in dk.row_mut(j)[cols.clone()].iter_mut().zip(&qi) {
                        *o += ds * qv;
                    }
                }
            }
        }
        let mut da = linear_backward(&dq, &c.a, &l.wq, &mut g.wq, &mut g.bq);
        da.add_assign(&linear_backward(&dk, &c.a, &l.wk, &mut g.wk, &mut g.bk))
            .expect("shapes agree");
        da.add_assign(&linear_backward(&dv, &c.a, &l.wv, &mut g.wv, &mut g.bv))
            .expect("shapes agree");
        let dx_ln = layer_norm_backward(&da, &c.x_in, &c.ln1_mean, &c.ln1_inv, &l.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        dx = dx1;
        dx.add_assign(&dx_ln).expect("shapes agree");
    }
    dx
}
