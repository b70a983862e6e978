//! Exact predictive moments of an SE-kernel GP when the test input is
//! Gaussian rather than a point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{GaussPred, GpModel, KernelKind};

/// Predictive mean and variance of q when `x ~ N(mean, cov)`.
///
/// Diagonal covariances take a cheaper path that only touches the
/// dimensions with nonzero variance.
pub fn predict_uncertain(model: &GpModel, mean: &[f64], cov: &DMatrix<f64>) -> Result<GaussPred> {
    let n = model.dim();
    if cov.nrows() != n || cov.ncols() != n || mean.len() != n {
        return Err(Error::Parameter("input moments do not match the model dimension".into()));
    }
    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || cov[(i, j)] == 0.0));
    if is_diag {
        let var: Vec<f64> = (0..n).map(|d| cov[(d, d)]).collect();
        return predict_uncertain_diag(model, mean, &var);
    }
    predict_uncertain_full(model, mean, cov)
}

fn predict_uncertain_full(model: &GpModel, mean: &[f64], cov: &DMatrix<f64>) -> Result<GaussPred> {
    let n = model.dim();
    if model.kind() != KernelKind::Se {
        return Err(Error::UnsupportedKernel);
    }
    for i in 0..n {
        if cov[(i, i)] < 0.0 || (0..i).any(|j| cov[(i, j)] != cov[(j, i)]) {
            return Err(Error::Parameter("input covariance must be symmetric PSD".into()));
        }
    }
    let p = model.params();
    let lambda = DMatrix::from_diagonal(&DVector::from_iterator(n, p.length_scales.iter().map(|l| l * l)));
    let log_det_lambda: f64 = p.length_scales.iter().map(|l| 2.0 * l.ln()).sum();
    let a_chol = (cov + &lambda)
        .cholesky()
        .ok_or_else(|| Error::Parameter("input covariance is not PSD".into()))?;
    let b_chol = (cov * 2.0 + &lambda)
        .cholesky()
        .ok_or_else(|| Error::Parameter("input covariance is not PSD".into()))?;
    let log_det = |ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>| -> f64 {
        ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
    };

    let m = model.inputs().len();
    // rows are x_i - mean
    let diffs = DMatrix::from_fn(m, n, |i, d| model.inputs()[i][d] - mean[d]);
    let inv_l2 = DVector::from_iterator(n, p.length_scales.iter().map(|l| 1.0 / (l * l)));

    let a_inv = a_chol.inverse();
    let b_inv = b_chol.inverse();
    let mut weight = -b_inv;
    for d in 0..n {
        weight[(d, d)] += inv_l2[d];
    }
    let g = &diffs * weight * diffs.transpose();

    let mut log_k = Vec::with_capacity(m);
    let mut log_q = Vec::with_capacity(m);
    let sv_ln = p.signal_variance.ln();
    let q_norm = -0.5 * (log_det(&a_chol) - log_det_lambda);
    for i in 0..m {
        let row = diffs.row(i).transpose();
        let plain: f64 = row.iter().zip(inv_l2.iter()).map(|(a, w)| a * a * w).sum();
        log_k.push(sv_ln - 0.5 * plain);
        log_q.push(sv_ln + q_norm - 0.5 * (row.transpose() * &a_inv * &row)[(0, 0)]);
    }
    let qq_norm = -0.5 * (log_det(&b_chol) - log_det_lambda);
    Ok(assemble(model, &log_k, &log_q, qq_norm, |i, j| g[(i, i)] + 2.0 * g[(i, j)] + g[(j, j)]))
}

/// [`predict_uncertain`] for independent input noise with variances `var`.
pub fn predict_uncertain_diag(model: &GpModel, mean: &[f64], var: &[f64]) -> Result<GaussPred> {
    if model.kind() != KernelKind::Se {
        return Err(Error::UnsupportedKernel);
    }
    let n = model.dim();
    if mean.len() != n || var.len() != n {
        return Err(Error::Parameter("input moments do not match the model dimension".into()));
    }
    if var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Parameter("input variances must be finite and nonnegative".into()));
    }
    let p = model.params();
    let l2: Vec<f64> = p.length_scales.iter().map(|l| l * l).collect();
    let uncertain: Vec<usize> = (0..n).filter(|&d| var[d] > 0.0).collect();

    let q_norm: f64 = -0.5 * uncertain.iter().map(|&d| (var[d] / l2[d]).ln_1p()).sum::<f64>();
    let qq_norm: f64 = -0.5 * uncertain.iter().map(|&d| (2.0 * var[d] / l2[d]).ln_1p()).sum::<f64>();
    let weight: Vec<f64> = uncertain
        .iter()
        .map(|&d| 1.0 / l2[d] - 1.0 / (2.0 * var[d] + l2[d]))
        .collect();

    let m = model.inputs().len();
    let sv_ln = p.signal_variance.ln();
    let mut log_k = Vec::with_capacity(m);
    let mut log_q = Vec::with_capacity(m);
    // scaled differences restricted to the uncertain dimensions
    let mut scaled = Vec::with_capacity(m * uncertain.len());
    for x in model.inputs() {
        let mut plain = 0.0;
        let mut inflated = 0.0;
        for d in 0..n {
            let a = x[d] - mean[d];
            plain += a * a / l2[d];
            inflated += a * a / (l2[d] + var[d]);
        }
        log_k.push(sv_ln - 0.5 * plain);
        log_q.push(sv_ln + q_norm - 0.5 * inflated);
        for (k, &d) in uncertain.iter().enumerate() {
            scaled.push((x[d] - mean[d]) * weight[k].sqrt());
        }
    }
    let u = uncertain.len();
    let self_term: Vec<f64> = (0..m)
        .map(|i| scaled[i * u..(i + 1) * u].iter().map(|v| v * v).sum())
        .collect();
    let cross = |i: usize, j: usize| -> f64 {
        let a = &scaled[i * u..(i + 1) * u];
        let b = &scaled[j * u..(j + 1) * u];
        self_term[i] + self_term[j] + 2.0 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    };
    Ok(assemble(model, &log_k, &log_q, qq_norm, cross))
}

/// Predictive mean only of [`predict_uncertain_diag`], in `O(m n)` rather
/// than `O(m^2 n)`.
pub fn predict_uncertain_mean_diag(model: &GpModel, mean: &[f64], var: &[f64]) -> Result<f64> {
    if model.kind() != KernelKind::Se {
        return Err(Error::UnsupportedKernel);
    }
    let n = model.dim();
    if mean.len() != n || var.len() != n {
        return Err(Error::Parameter("input moments do not match the model dimension".into()));
    }
    if var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Parameter("input variances must be finite and nonnegative".into()));
    }
    let p = model.params();
    let inflated: Vec<f64> = p.length_scales.iter().zip(var).map(|(l, v)| l * l + v).collect();
    let log_norm = p.signal_variance.ln()
        - 0.5 * p.length_scales.iter().zip(var).map(|(l, v)| (v / (l * l)).ln_1p()).sum::<f64>();
    let beta = model.alpha();
    let mut acc = 0.0;
    for (i, x) in model.inputs().iter().enumerate() {
        let quad: f64 = (0..n).map(|d| (x[d] - mean[d]).powi(2) / inflated[d]).sum();
        acc += beta[i] * (log_norm - 0.5 * quad).exp();
    }
    Ok(acc + model.offset())
}

/// Combines the per-point terms into predictive moments.
/// `quad(i, j)` is `s^T (Lambda^-1 - (2 Sigma + Lambda)^-1) s` with
/// `s = x_i + x_j - 2 mean`.
fn assemble(model: &GpModel, log_k: &[f64], log_q: &[f64], qq_norm: f64, quad: impl Fn(usize, usize) -> f64) -> GaussPred {
    let beta = model.alpha();
    let kinv = model.gram_inverse();
    let m = log_k.len();
    let mean_c: f64 = (0..m).map(|i| beta[i] * log_q[i].exp()).sum();
    let mut trace = 0.0;
    let mut beta_q_beta = 0.0;
    for i in 0..m {
        for j in 0..=i {
            let q = (log_k[i] + log_k[j] + qq_norm + 0.25 * quad(i, j)).exp();
            let factor = if i == j { 1.0 } else { 2.0 };
            trace += factor * kinv[(i, j)] * q;
            beta_q_beta += factor * beta[i] * beta[j] * q;
        }
    }
    let p = model.params();
    let latent = (p.signal_variance - trace + beta_q_beta - mean_c * mean_c).max(0.0);
    GaussPred {
        mean: mean_c + model.offset(),
        variance: latent + p.noise_variance,
    }
}
