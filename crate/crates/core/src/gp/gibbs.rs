//! Marginalization of missing DEM heights by Gibbs sampling under a
//! Gaussian Markov random field smoothness prior.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dem::{Dem, DemGeometry, StateVector};
use crate::error::{Error, Result};
use crate::gp::{GaussPred, GpModel};
use crate::policy::{Qpdf, QpdfSummary};
use crate::seed;

/// Pairwise smoothness prior over DEM heights:
/// `p(h) ∝ exp(-coupling/2 Σ_edges (h_i - h_j)^2 - anchor/2 Σ_i h_i^2)`
/// with edges between 4-neighbors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemPrior {
    /// Precision on neighbor height differences; may be infinite.
    pub coupling: f64,
    /// Weak precision pulling every height towards zero.
    pub anchor: f64,
}

impl DemPrior {
    pub fn new(coupling: f64, anchor: f64) -> Result<Self> {
        if !(coupling >= 0.0) || !(anchor >= 0.0) || (coupling == 0.0 && anchor == 0.0) {
            return Err(Error::Parameter("prior precisions must be nonnegative and not both zero".into()));
        }
        Ok(DemPrior { coupling, anchor })
    }

    /// Fits the coupling from the empirical variance of 4-neighbor height
    /// differences and the anchor from the mean squared height.
    pub fn fit(dems: &[Dem]) -> Result<Self> {
        let (mut diff_sq, mut n_diff, mut h_sq, mut n_h) = (0.0, 0usize, 0.0, 0usize);
        for dem in dems {
            let g = dem.geometry();
            for r in 0..g.rows {
                for c in 0..g.cols {
                    let h = dem.height_at(r, c);
                    h_sq += h * h;
                    n_h += 1;
                    if r + 1 < g.rows {
                        diff_sq += (h - dem.height_at(r + 1, c)).powi(2);
                        n_diff += 1;
                    }
                    if c + 1 < g.cols {
                        diff_sq += (h - dem.height_at(r, c + 1)).powi(2);
                        n_diff += 1;
                    }
                }
            }
        }
        if n_h == 0 {
            return Err(Error::Parameter("no DEMs to fit the prior on".into()));
        }
        let precision = |sum: f64, n: usize| {
            if n == 0 || sum == 0.0 {
                f64::INFINITY
            } else {
                n as f64 / sum
            }
        };
        // Keep the anchor much weaker than the coupling so that neighbors,
        // not the zero level, dominate the fill.
        let coupling = precision(diff_sq, n_diff);
        let anchor = (precision(h_sq, n_h) * 0.01).min(coupling * 0.01);
        DemPrior::new(coupling, if anchor.is_finite() { anchor } else { 0.0 })
    }

    /// Conditional mean and variance of one bin given its neighbors.
    pub fn conditional(&self, neighbors: &[f64]) -> (f64, f64) {
        let deg = neighbors.len() as f64;
        let sum: f64 = neighbors.iter().sum();
        if deg > 0.0 && self.coupling.is_infinite() {
            return (sum / deg, 0.0);
        }
        if self.anchor.is_infinite() {
            return (0.0, 0.0);
        }
        let precision = self.coupling * deg + self.anchor;
        (self.coupling * sum / precision, 1.0 / precision)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsParams {
    pub n_samples: usize,
    pub burn_in: usize,
}

impl Default for GibbsParams {
    fn default() -> Self {
        GibbsParams {
            n_samples: 200,
            burn_in: 50,
        }
    }
}

/// Where the DEM sits inside a state vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemSlot {
    pub offset: usize,
    pub geometry: DemGeometry,
}

/// Runs the chain and returns `n_samples` completed state vectors, one per
/// sweep after burn-in. Missing bins are visited in ascending order.
pub fn gibbs_completions(
    x: &StateVector,
    slot: DemSlot,
    prior: &DemPrior,
    params: &GibbsParams,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let g = slot.geometry;
    if params.n_samples == 0 {
        return Err(Error::Parameter("Gibbs sampling needs at least one sample".into()));
    }
    if slot.offset + g.bins() != x.len() {
        return Err(Error::Validation("state length does not match the DEM slot".into()));
    }
    if (0..slot.offset).any(|f| x.is_missing(f)) {
        return Err(Error::Validation("only DEM entries may be missing".into()));
    }
    let missing: Vec<usize> = (0..g.bins()).filter(|&b| x.is_missing(slot.offset + b)).collect();
    let mut current = x.values().to_vec();
    for &b in &missing {
        current[slot.offset + b] = 0.0;
    }
    if missing.is_empty() {
        return Ok(vec![current; params.n_samples.max(1)]);
    }
    let neighbors: Vec<Vec<usize>> = missing
        .iter()
        .map(|&b| {
            let (r, c) = g.row_col(b);
            let mut out = Vec::with_capacity(4);
            if r > 0 {
                out.push(g.bin(r - 1, c));
            }
            if r + 1 < g.rows {
                out.push(g.bin(r + 1, c));
            }
            if c > 0 {
                out.push(g.bin(r, c - 1));
            }
            if c + 1 < g.cols {
                out.push(g.bin(r, c + 1));
            }
            out
        })
        .collect();
    let mut rng = seed::rng(seed, &[]);
    let mut out = Vec::with_capacity(params.n_samples);
    let mut nbr_heights = Vec::with_capacity(4);
    for sweep in 0..params.burn_in + params.n_samples {
        for (k, &b) in missing.iter().enumerate() {
            nbr_heights.clear();
            nbr_heights.extend(neighbors[k].iter().map(|&nb| current[slot.offset + nb]));
            let (mean, var) = prior.conditional(&nbr_heights);
            let z: f64 = rng.sample(StandardNormal);
            current[slot.offset + b] = mean + var.sqrt() * z;
        }
        if sweep >= params.burn_in {
            out.push(current.clone());
        }
    }
    Ok(out)
}

/// Single Gaussian with the first two moments of an equal-weight mixture.
pub fn collapse(components: &[GaussPred]) -> GaussPred {
    let n = components.len() as f64;
    let mean = components.iter().map(|c| c.mean).sum::<f64>() / n;
    let second = components.iter().map(|c| c.variance + c.mean * c.mean).sum::<f64>() / n;
    GaussPred {
        mean,
        variance: (second - mean * mean).max(0.0),
    }
}

/// How the safety of a Gibbs mixture is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MixtureSafety {
    /// Safety of the moment-collapsed Gaussian.
    #[default]
    Collapsed,
    /// Average safety of the mixture components.
    Exact,
}

impl std::str::FromStr for MixtureSafety {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collapsed" => Ok(MixtureSafety::Collapsed),
            "exact" => Ok(MixtureSafety::Exact),
            _ => Err(Error::Parameter(format!("unknown mixture safety mode {s:?}"))),
        }
    }
}

pub fn mixture_summary(components: &[GaussPred], mode: MixtureSafety) -> QpdfSummary {
    let collapsed = collapse(components);
    let safety = match mode {
        MixtureSafety::Collapsed => collapsed.safety(),
        MixtureSafety::Exact => {
            components.iter().map(|c| c.safety()).sum::<f64>() / components.len() as f64
        }
    };
    QpdfSummary {
        expected_q: collapsed.mean,
        safety,
    }
}

/// GP prediction with the missing DEM heights integrated out by Gibbs
/// sampling. A fully observed state is predicted directly.
pub fn gibbs_marginalize(
    model: &GpModel,
    x: &StateVector,
    slot: DemSlot,
    prior: &DemPrior,
    params: &GibbsParams,
    seed: u64,
) -> Result<GaussPred> {
    if x.missing_count() == 0 {
        return Ok(model.predict(x.values()));
    }
    let samples = gibbs_completions(x, slot, prior, params, seed)?;
    let preds: Vec<GaussPred> = samples.iter().map(|s| model.predict(s)).collect();
    Ok(collapse(&preds))
}
