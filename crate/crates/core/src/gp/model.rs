use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gp::kernel::{KernelKind, KernelParams};
use crate::gp::GaussPred;
use crate::seed;

/// Jitter ladder tried, in order, when the Gram matrix is not numerically
/// positive definite.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

const LOG_BOUND: f64 = 13.8;

/// Exact GP regression on centered targets with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct GpModel {
    params: KernelParams,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    offset: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    gram_inv: DMatrix<f64>,
    jitter: f64,
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on `(inputs, targets)`.
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, params: KernelParams) -> Result<Self> {
        params.validate()?;
        check_data(&inputs, &targets, params.dim())?;
        let offset = targets.iter().sum::<f64>() / targets.len() as f64;
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - offset));
        let k = gram(&params, &inputs);
        let (chol, jitter) = factorize(k, params.noise_variance)?;
        let alpha = chol.solve(&y);
        let gram_inv = chol.inverse();
        Ok(GpModel {
            params,
            inputs,
            targets,
            offset,
            chol,
            alpha,
            gram_inv,
            jitter,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn kind(&self) -> KernelKind {
        self.params.kind
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub(crate) fn offset(&self) -> f64 {
        self.offset
    }

    /// `(K + noise I)^-1 (q - mean q)`.
    pub(crate) fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// `(K + noise I)^-1`, cached for moment matching.
    pub(crate) fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// Noise plus whatever jitter factorization needed.
    pub fn effective_noise(&self) -> f64 {
        self.params.noise_variance + self.jitter
    }

    /// Per-dimension length scales; smaller means more relevant.
    pub fn ard_values(&self) -> &[f64] {
        &self.params.length_scales
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let m = self.targets.len() as f64;
        let y = DVector::from_iterator(self.targets.len(), self.targets.iter().map(|t| t - self.offset));
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * y.dot(&self.alpha) - log_det - 0.5 * m * (2.0 * std::f64::consts::PI).ln()
    }

    /// Latent posterior mean and variance at a fully observed input.
    pub fn predict_latent(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| crate::gp::kernel_eval(&self.params, xi, x)),
        );
        let mean = ks.dot(&self.alpha) + self.offset;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a nonzero diagonal");
        let var = (self.params.signal_variance - v.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Predictive distribution of q at `x`: latent variance plus noise.
    pub fn predict(&self, x: &[f64]) -> GaussPred {
        let (mean, var) = self.predict_latent(x);
        GaussPred {
            mean,
            variance: var + self.params.noise_variance,
        }
    }

    /// Posterior mean only; cheaper than [`GpModel::predict`].
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.inputs
            .iter()
            .zip(self.alpha.iter())
            .map(|(xi, a)| a * crate::gp::kernel_eval(&self.params, xi, x))
            .sum::<f64>()
            + self.offset
    }
}

fn check_data(inputs: &[Vec<f64>], targets: &[f64], dim: usize) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::Parameter("inputs and targets differ in length".into()));
    }
    if inputs.is_empty() {
        return Err(Error::Parameter("GP needs at least one training point".into()));
    }
    for x in inputs {
        if x.len() != dim {
            return Err(Error::Parameter(format!(
                "input has {} dimensions, kernel has {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("GP training inputs must be fully observed".into()));
        }
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Parameter("non-finite GP target".into()));
    }
    Ok(())
}

/// Noise-free kernel Gram matrix.
pub fn gram(params: &KernelParams, inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let m = inputs.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = params.signal_variance;
        for j in 0..i {
            let v = crate::gp::kernel_eval(params, &inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `K + noise I`, climbing the jitter ladder on failure.
pub fn factorize(k: DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for &jitter in &JITTER_LADDER {
        let mut ky = k.clone();
        for i in 0..ky.nrows() {
            ky[(i, i)] += noise + jitter;
        }
        if let Some(ch) = Cholesky::new(ky) {
            return Ok((ch, jitter));
        }
    }
    Err(Error::Training(
        "Gram matrix not positive definite after maximum jitter".into(),
    ))
}

/// Log marginal likelihood of centered targets `y` at log-hyperparameters
/// `theta`, with its analytic gradient.
pub fn lml_and_grad(kind: KernelKind, inputs: &[Vec<f64>], y: &[f64], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let dim = inputs[0].len();
    let p = KernelParams::from_log(kind, dim, theta);
    let m = inputs.len();
    let k = gram(&p, inputs);
    let (chol, _) = factorize(k.clone(), p.noise_variance)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let lml = -0.5 * yv.dot(&alpha) - log_det - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();

    // dL/dtheta = 1/2 tr(W dK/dtheta), W = alpha alpha^T - K^-1
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);

    let mut grad = vec![0.0; theta.len()];
    let inv_l2: Vec<f64> = p.length_scales.iter().map(|l| 1.0 / (l * l)).collect();
    let alpha_idx = dim + 1;
    let mut trace_w = 0.0;
    for i in 0..m {
        trace_w += w[(i, i)];
        grad[0] += 0.5 * w[(i, i)] * p.signal_variance;
        for j in 0..i {
            let wij = w[(i, j)];
            let kij = k[(i, j)];
            // symmetric pair: factor 2 cancels the 1/2
            grad[0] += wij * kij;
            let r2 = p.scaled_sq_dist(&inputs[i], &inputs[j]);
            let common = match kind {
                KernelKind::Se => kij,
                KernelKind::Rq => {
                    let base = 1.0 + r2 / (2.0 * p.rq_alpha);
                    p.signal_variance * base.powf(-p.rq_alpha - 1.0)
                }
            };
            let f = wij * common;
            if f != 0.0 {
                for d in 0..dim {
                    let diff = inputs[i][d] - inputs[j][d];
                    grad[1 + d] += f * diff * diff * inv_l2[d];
                }
            }
            if kind == KernelKind::Rq {
                let u = 0.5 * r2 / p.rq_alpha;
                let dk = kij * p.rq_alpha * (-u.ln_1p() + u / (1.0 + u));
                grad[alpha_idx] += wij * dk;
            }
        }
    }
    let last = theta.len() - 1;
    grad[last] = 0.5 * p.noise_variance * trace_w;
    Ok((lml, grad))
}

/// Log marginal likelihood only.
pub fn lml(kind: KernelKind, inputs: &[Vec<f64>], y: &[f64], theta: &[f64]) -> Result<f64> {
    let dim = inputs[0].len();
    let p = KernelParams::from_log(kind, dim, theta);
    let (chol, _) = factorize(gram(&p, inputs), p.noise_variance)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * yv.dot(&alpha) - log_det - 0.5 * inputs.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpTrainParams {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when an accepted step changes the log likelihood by less.
    pub tol: f64,
    /// Seeded subsample size cap; exact GP cost is cubic in it.
    pub max_points: usize,
}

impl Default for GpTrainParams {
    fn default() -> Self {
        GpTrainParams {
            restarts: 5,
            max_iters: 200,
            tol: 1e-6,
            max_points: 500,
        }
    }
}

/// Heuristic starting point: signal variance from the targets, length
/// scales from per-feature spread.
fn initial_params(kind: KernelKind, inputs: &[Vec<f64>], y: &[f64]) -> KernelParams {
    let m = inputs.len() as f64;
    let dim = inputs[0].len();
    let var_y = y.iter().map(|v| v * v).sum::<f64>() / m;
    let sv = if var_y > 1e-12 { var_y } else { 1.0 };
    let ls = (0..dim)
        .map(|d| {
            let mean = inputs.iter().map(|x| x[d]).sum::<f64>() / m;
            let var = inputs.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / m;
            if var > 1e-12 {
                2.0 * var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    KernelParams {
        kind,
        signal_variance: sv,
        length_scales: ls,
        rq_alpha: 1.0,
        noise_variance: 0.05 * sv + 1e-6,
    }
}

/// Gradient ascent on the log marginal likelihood with backtracking line
/// search. Returns the final log-hyperparameters and likelihood.
fn ascend(kind: KernelKind, inputs: &[Vec<f64>], y: &[f64], mut theta: Vec<f64>, tp: &GpTrainParams) -> Result<(Vec<f64>, f64)> {
    let (mut f, mut g) = lml_and_grad(kind, inputs, y, &theta)?;
    let mut step = 0.1 / g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for _ in 0..tp.max_iters {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2 == 0.0 {
            break;
        }
        let mut accepted = None;
        while step > 1e-14 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&g)
                .map(|(t, gi)| (t + step * gi).clamp(-LOG_BOUND, LOG_BOUND))
                .collect();
            match lml(kind, inputs, y, &cand) {
                Ok(fc) if fc >= f + 1e-4 * step * g2 => {
                    accepted = Some((cand, fc));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((cand, fc)) = accepted else { break };
        let change = fc - f;
        theta = cand;
        (f, g) = lml_and_grad(kind, inputs, y, &theta)?;
        step *= 2.0;
        if change < tp.tol {
            break;
        }
    }
    Ok((theta, f))
}

/// Maximizes the log marginal likelihood over log-hyperparameters with
/// seeded restarts. Training sets larger than `max_points` are subsampled.
/// The best restart wins; ties go to the lowest restart index.
pub fn train_gp(inputs: &[Vec<f64>], targets: &[f64], kind: KernelKind, tp: &GpTrainParams, seed: u64) -> Result<GpModel> {
    if inputs.len() < 2 {
        return Err(Error::Parameter("GP training needs at least two points".into()));
    }
    let dim = inputs[0].len();
    check_data(inputs, targets, dim)?;
    let (xs, ts): (Vec<Vec<f64>>, Vec<f64>) = if inputs.len() > tp.max_points {
        let mut rng = seed::rng(seed, &[0xcafe]);
        let mut idx = index::sample(&mut rng, inputs.len(), tp.max_points).into_vec();
        idx.sort_unstable();
        idx.iter().map(|&i| (inputs[i].clone(), targets[i])).unzip()
    } else {
        (inputs.to_vec(), targets.to_vec())
    };
    let offset = ts.iter().sum::<f64>() / ts.len() as f64;
    let y: Vec<f64> = ts.iter().map(|t| t - offset).collect();
    let base = initial_params(kind, &xs, &y).to_log();
    let normal = Normal::new(0.0, 0.5).expect("valid normal");
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_err = None;
    for r in 0..tp.restarts.max(1) {
        let start: Vec<f64> = if r == 0 {
            base.clone()
        } else {
            let mut rng = seed::rng(seed, &[r as u64]);
            base.iter()
                .map(|t| (t + normal.sample(&mut rng)).clamp(-LOG_BOUND, LOG_BOUND))
                .collect()
        };
        match ascend(kind, &xs, &y, start, tp) {
            Ok((theta, f)) => {
                if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                    best = Some((theta, f));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((theta, _)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::Training("no restart succeeded".into())));
    };
    GpModel::new(xs, ts, KernelParams::from_log(kind, dim, &theta))
}
