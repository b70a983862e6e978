use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// Squared exponential.
    Se,
    /// Rational quadratic.
    Rq,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Se => "se",
            KernelKind::Rq => "rq",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" => Ok(KernelKind::Se),
            "rq" => Ok(KernelKind::Rq),
            _ => Err(Error::Parameter(format!("unknown kernel {s:?}"))),
        }
    }
}

/// ARD kernel hyperparameters plus the observation noise.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    /// Shape parameter, used by the RQ kernel only.
    pub rq_alpha: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(kind: KernelKind, signal_variance: f64, length_scales: Vec<f64>, noise_variance: f64) -> Self {
        KernelParams {
            kind,
            signal_variance,
            length_scales,
            rq_alpha: 1.0,
            noise_variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && !v.is_nan();
        if !positive(self.signal_variance)
            || !positive(self.noise_variance)
            || !positive(self.rq_alpha)
            || !self.length_scales.iter().all(|&l| positive(l))
        {
            return Err(Error::Parameter("kernel hyperparameters must be positive".into()));
        }
        Ok(())
    }

    /// Number of optimized log-hyperparameters.
    pub fn n_hyper(&self) -> usize {
        self.dim() + 2 + usize::from(self.kind == KernelKind::Rq)
    }

    /// `[ln sv, ln l_1..ln l_n, (ln alpha), ln noise]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_hyper());
        v.push(self.signal_variance.ln());
        v.extend(self.length_scales.iter().map(|l| l.ln()));
        if self.kind == KernelKind::Rq {
            v.push(self.rq_alpha.ln());
        }
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(kind: KernelKind, dim: usize, theta: &[f64]) -> Self {
        let ls = theta[1..=dim].iter().map(|t| t.exp()).collect();
        let rq_alpha = if kind == KernelKind::Rq {
            theta[dim + 1].exp()
        } else {
            1.0
        };
        KernelParams {
            kind,
            signal_variance: theta[0].exp(),
            length_scales: ls,
            rq_alpha,
            noise_variance: theta[theta.len() - 1].exp(),
        }
    }

    /// Scaled squared distance `sum_d ((a_d - b_d) / l_d)^2`.
    pub fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum()
    }

    /// Kernel value as a function of the scaled squared distance.
    pub fn from_sq_dist(&self, r2: f64) -> f64 {
        match self.kind {
            KernelKind::Se => self.signal_variance * (-0.5 * r2).exp(),
            KernelKind::Rq => {
                self.signal_variance * (1.0 + r2 / (2.0 * self.rq_alpha)).powf(-self.rq_alpha)
            }
        }
    }
}

/// `k(a, b)`; symmetric in its arguments bit for bit.
pub fn kernel_eval(params: &KernelParams, a: &[f64], b: &[f64]) -> f64 {
    params.from_sq_dist(params.scaled_sq_dist(a, b))
}
