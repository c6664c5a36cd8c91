//! Covariance Matrix Adaptation Evolution Strategy with an ask/tell interface.
//!
//! Full-covariance CMA-ES with cumulative step-size adaptation, rank-one and
//! rank-mu covariance updates, and the default strategy parameters of
//! Hansen & Ostermeier (2001) and Hansen, Müller & Koumoutsakos (2003).
//! The optimizer never sees the objective: callers `ask` for a batch, fill in
//! the losses, and `tell` the batch back.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Smallest eigenvalue allowed in the covariance matrix.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Candidate solutions from one `ask`, with losses filled in by the caller.
#[derive(Clone, Debug)]
pub struct CandidateBatch {
    generation: usize,
    pub candidates: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
}

impl CandidateBatch {
    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Convenience for serial callers.
    pub fn evaluate_with<F: FnMut(&[f64]) -> f64>(&mut self, mut f: F) {
        self.losses = self.candidates.iter().map(|c| f(c)).collect();
    }
}

/// One line of the optimizer trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub generation: usize,
    pub evaluations: usize,
    pub best_loss: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug)]
pub struct CmaesState {
    dim: usize,
    mean: Vec<f64>,
    sigma: f64,
    covariance: Matrix,
    /// eigenvectors of C, column-major in the nalgebra sense
    basis: DMatrix<f64>,
    /// square roots of the eigenvalues of C
    scales: Vec<f64>,
    path_sigma: Vec<f64>,
    path_c: Vec<f64>,
    generation: usize,
    evaluations: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    last_eigen_update: usize,
    floor_events: usize,
    best: Option<(Vec<f64>, f64)>,
    pending: Option<usize>,
}

impl CmaesState {
    /// Fresh optimizer with identity covariance. `population_size` overrides
    /// the default `4 + floor(3 ln dim)`.
    pub fn new(dim: usize, initial_mean: Vec<f64>, initial_sigma: f64, population_size: Option<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("CMA-ES dimension must be at least 1".into()));
        }
        if initial_mean.len() != dim {
            return Err(Error::shape(
                "CmaesState::new",
                format!("dim {dim}"),
                format!("initial mean of length {}", initial_mean.len()),
            ));
        }
        if !(initial_sigma > 0.0 && initial_sigma.is_finite()) {
            return Err(Error::Argument(format!("initial sigma must be positive, got {initial_sigma}")));
        }
        let n = dim as f64;
        let lambda = population_size.unwrap_or_else(|| default_population_size(dim));
        if lambda < 2 {
            return Err(Error::Argument(format!("population size must be at least 2, got {lambda}")));
        }
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        Ok(Self {
            dim,
            mean: initial_mean,
            sigma: initial_sigma,
            covariance: Matrix::identity(dim),
            basis: DMatrix::identity(dim, dim),
            scales: vec![1.0; dim],
            path_sigma: vec![0.0; dim],
            path_c: vec![0.0; dim],
            generation: 0,
            evaluations: 0,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            last_eigen_update: 0,
            floor_events: 0,
            best: None,
            pending: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn population_size(&self) -> usize {
        self.lambda
    }

    pub fn parent_count(&self) -> usize {
        self.mu
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn path_sigma(&self) -> &[f64] {
        &self.path_sigma
    }

    pub fn path_c(&self) -> &[f64] {
        &self.path_c
    }

    /// How many times eigenvalue flooring had to repair C.
    pub fn floor_events(&self) -> usize {
        self.floor_events
    }

    /// Best candidate seen across all told batches.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f))
    }

    pub fn best_loss(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.1)
    }

    pub fn trace(&self) -> TraceRecord {
        TraceRecord {
            generation: self.generation,
            evaluations: self.evaluations,
            best_loss: self.best_loss(),
            sigma: self.sigma,
        }
    }

    /// Draw `lambda` samples from `N(mean, sigma^2 C)`.
    pub fn ask(&mut self, rng: &mut RngStream) -> Result<CandidateBatch> {
        if self.pending.is_some() {
            return Err(Error::Protocol(format!(
                "ask called twice without tell (generation {})",
                self.generation
            )));
        }
        let mut candidates = Vec::with_capacity(self.lambda);
        let mut z = vec![0.0; self.dim];
        for _ in 0..self.lambda {
            for zi in z.iter_mut() {
                *zi = rng.normal();
            }
            let mut x = self.mean.clone();
            // x = m + sigma * B * (D .* z)
            for (j, (&zj, &dj)) in z.iter().zip(&self.scales).enumerate() {
                let s = self.sigma * dj * zj;
                if s == 0.0 {
                    continue;
                }
                let col = self.basis.column(j);
                for (xi, bij) in x.iter_mut().zip(col.iter()) {
                    *xi += s * bij;
                }
            }
            candidates.push(x);
        }
        self.pending = Some(self.generation);
        Ok(CandidateBatch {
            generation: self.generation,
            candidates,
            losses: Vec::new(),
        })
    }

    /// Update the search distribution from an evaluated batch.
    pub fn tell(&mut self, batch: CandidateBatch) -> Result<()> {
        match self.pending {
            Some(g) if g == batch.generation => {}
            Some(g) => {
                return Err(Error::Protocol(format!(
                    "batch from generation {} told, but generation {g} is pending",
                    batch.generation
                )))
            }
            None => return Err(Error::Protocol("tell called without a preceding ask".into())),
        }
        if batch.candidates.len() != self.lambda || batch.losses.len() != self.lambda {
            return Err(Error::Protocol(format!(
                "expected {} candidates with losses, got {} candidates and {} losses",
                self.lambda,
                batch.candidates.len(),
                batch.losses.len()
            )));
        }
        if let Some(i) = batch.losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::Protocol(format!("candidate {i} has non-finite loss {}", batch.losses[i])));
        }
        self.pending = None;

        // stable: ties keep candidate order
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| batch.losses[a].total_cmp(&batch.losses[b]));

        let best_idx = order[0];
        if batch.losses[best_idx] < self.best_loss() {
            self.best = Some((batch.candidates[best_idx].clone(), batch.losses[best_idx]));
        }

        let n = self.dim;
        let old_mean = self.mean.clone();
        let steps: Vec<Vec<f64>> = order[..self.mu]
            .iter()
            .map(|&i| {
                batch.candidates[i]
                    .iter()
                    .zip(&old_mean)
                    .map(|(x, m)| (x - m) / self.sigma)
                    .collect()
            })
            .collect();
        let mut y_w = vec![0.0; n];
        for (w, y) in self.weights.iter().zip(&steps) {
            for (acc, yi) in y_w.iter_mut().zip(y) {
                *acc += w * yi;
            }
        }
        for ((m, om), yw) in self.mean.iter_mut().zip(&old_mean).zip(&y_w) {
            *m = om + self.sigma * yw;
        }

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let bt_y: Vec<f64> = (0..n)
            .map(|j| self.basis.column(j).iter().zip(&y_w).map(|(b, y)| b * y).sum())
            .collect();
        let mut inv_sqrt_y = vec![0.0; n];
        for (j, (&b, &sc)) in bt_y.iter().zip(&self.scales).enumerate() {
            let s = b / sc;
            for (acc, bij) in inv_sqrt_y.iter_mut().zip(self.basis.column(j).iter()) {
                *acc += s * bij;
            }
        }
        let cs = self.c_sigma;
        let norm_cs = (cs * (2.0 - cs) * self.mu_eff).sqrt();
        for (p, v) in self.path_sigma.iter_mut().zip(&inv_sqrt_y) {
            *p = (1.0 - cs) * *p + norm_cs * v;
        }
        let ps_norm = self.path_sigma.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gen_plus = (self.generation + 1) as f64;
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * gen_plus)).sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * self.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };

        let cc = self.c_c;
        let norm_cc = (cc * (2.0 - cc) * self.mu_eff).sqrt();
        for (p, yw) in self.path_c.iter_mut().zip(&y_w) {
            *p = (1.0 - cc) * *p + h * norm_cc * yw;
        }

        let c1 = self.c_1;
        let cmu = self.c_mu;
        let decay = 1.0 - c1 - cmu + (1.0 - h) * c1 * cc * (2.0 - cc);
        let cov = self.covariance.data_mut();
        for i in 0..n {
            for j in 0..=i {
                let mut rank_mu = 0.0;
                for (w, y) in self.weights.iter().zip(&steps) {
                    rank_mu += w * y[i] * y[j];
                }
                let v = decay * cov[i * n + j] + c1 * self.path_c[i] * self.path_c[j] + cmu * rank_mu;
                cov[i * n + j] = v;
                cov[j * n + i] = v;
            }
        }

        self.sigma *= ((cs / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::Training(format!(
                "step size degenerated to {} at generation {}",
                self.sigma, self.generation
            )));
        }

        self.generation += 1;
        self.evaluations += self.lambda;

        let lag = self.lambda as f64 / ((c1 + cmu) * n as f64 * 10.0);
        if (self.generation - self.last_eigen_update) as f64 >= lag {
            self.refresh_eigensystem();
        }
        Ok(())
    }

    fn refresh_eigensystem(&mut self) {
        let n = self.dim;
        let c = DMatrix::from_row_slice(n, n, self.covariance.data());
        let sym = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let mut floored = false;
        let values: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&v| {
                if v < EIGEN_FLOOR || !v.is_finite() {
                    floored = true;
                    EIGEN_FLOOR
                } else {
                    v
                }
            })
            .collect();
        self.basis = eig.eigenvectors;
        if floored {
            self.floor_events += 1;
            log::warn!("covariance eigenvalue floored to {EIGEN_FLOOR} at generation {}", self.generation);
            // rebuild C = B diag(values) B^T
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values.clone()));
            let rebuilt = &self.basis * d * self.basis.transpose();
            for i in 0..n {
                for j in 0..n {
                    self.covariance.set(i, j, 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]));
                }
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    self.covariance.set(i, j, sym[(i, j)]);
                }
            }
        }
        self.scales = values.iter().map(|v| v.sqrt()).collect();
        self.last_eigen_update = self.generation;
    }
}

pub fn default_population_size(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

/// Runs ask/tell until the evaluation budget is spent, evaluating serially.
/// Returns the trace, one record per generation.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    state: &mut CmaesState,
    rng: &mut RngStream,
    budget: usize,
    target: f64,
    mut objective: F,
) -> Result<Vec<TraceRecord>> {
    let mut trace = Vec::new();
    while state.evaluations() + state.population_size() <= budget && state.best_loss() > target {
        let mut batch = state.ask(rng)?;
        batch.evaluate_with(&mut objective);
        state.tell(batch)?;
        trace.push(state.trace());
    }
    Ok(trace)
}
