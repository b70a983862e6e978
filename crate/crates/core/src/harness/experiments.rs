//! The two experiments: success rate under growing front occlusion, and
//! success rate as tactile exploration reveals occluded bins.

use crate::dem::{occlude_front, Dem};
use crate::error::{Error, Result};
use crate::flipper::FlipperConfig;
use crate::harness::models::{Method, ModelSet};
use crate::harness::{ensemble_point, AnnotatedState, CurvePoint};
use crate::policy::{best_expected, QpdfModel};
use crate::tte::{full_reveal_order, ArdStrategy, ExplorationForest, RandomStrategy, RlStrategy, Strategy, TteState};
use crate::seed;

/// Occlusion counts visited by the sweep: multiples of `step`, always
/// ending with the whole grid.
pub fn occlusion_levels(bins: usize, step: usize) -> Vec<usize> {
    let step = step.max(1);
    let mut levels: Vec<usize> = (0..=bins).step_by(step).collect();
    if levels.last() != Some(&bins) {
        levels.push(bins);
    }
    levels
}

/// Per-state success of `method` at every occlusion level, indexed
/// `[level][state]`. The annotation of the fully observed state is used at
/// every level.
pub fn occlusion_hits(
    states: &[AnnotatedState],
    models: &ModelSet,
    method: Method,
    levels: &[usize],
) -> Result<Vec<Vec<bool>>> {
    let qpdf = models.qpdf(method);
    levels
        .iter()
        .map(|&count| {
            states
                .iter()
                .map(|s| {
                    let seen = s.with_dem_mask(&occlude_front(&s.dem(), count)?);
                    Ok(s.is_permitted(best_expected(&qpdf.expected(&seen)?)))
                })
                .collect()
        })
        .collect()
}

/// Success-rate curves against the occluded share of the grid (percent).
/// Selection is the ungated expected-q argmax.
pub fn occlusion_sweep(
    states: &[AnnotatedState],
    models: &ModelSet,
    methods: &[Method],
    step: usize,
    ensemble: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if states.is_empty() || ensemble == 0 {
        return Err(Error::Parameter("the sweep needs states and at least one ensemble member".into()));
    }
    let bins = models.geometry.bins();
    let levels = occlusion_levels(bins, step);
    let mut out = Vec::new();
    for &m in methods {
        let hits = occlusion_hits(states, models, m, &levels)?;
        for (l, &count) in levels.iter().enumerate() {
            let x = 100.0 * count as f64 / bins as f64;
            out.push(ensemble_point(m.name(), x, states.len(), ensemble, seed, |_, i| hits[l][i]));
        }
    }
    Ok(out)
}

/// Initial exploration state: the front `fraction` of the grid occluded.
pub fn tte_start(state: &AnnotatedState, fraction: f64) -> Result<(TteState, Dem)> {
    let truth = state.dem();
    let count = (fraction * truth.bins() as f64).round() as usize;
    let seen = state.with_dem_mask(&occlude_front(&truth, count.min(truth.bins()))?);
    Ok((TteState::new(seen, state.geometry())?, truth))
}

/// Success after each prefix of `order`: entry `k` is the outcome with the
/// first `k` bins of the order revealed.
pub fn reveal_hits(
    state: &AnnotatedState,
    start: &TteState,
    truth: &Dem,
    order: &[usize],
    qpdf: &dyn QpdfModel,
) -> Result<Vec<bool>> {
    let mut s = start.clone();
    let mut hits = Vec::with_capacity(order.len() + 1);
    let pick = |s: &TteState| -> Result<FlipperConfig> { Ok(best_expected(&qpdf.expected(s.state())?)) };
    hits.push(state.is_permitted(pick(&s)?));
    for &b in order {
        s.reveal(b, truth.true_height(b))?;
        hits.push(state.is_permitted(pick(&s)?));
    }
    Ok(hits)
}

/// Which strategy probes the bins in a TTE curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeStrategy {
    Random,
    Ard,
    Rl,
}

/// A (model, strategy) pairing plotted as one TTE curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TteCurveSpec {
    pub name: &'static str,
    pub method: Method,
    pub strategy: ProbeStrategy,
}

pub const TTE_CURVES: [TteCurveSpec; 4] = [
    TteCurveSpec {
        name: "forest+random",
        method: Method::ForestMarginal,
        strategy: ProbeStrategy::Random,
    },
    TteCurveSpec {
        name: "forest+rl",
        method: Method::ForestMarginal,
        strategy: ProbeStrategy::Rl,
    },
    TteCurveSpec {
        name: "gp-se+random",
        method: Method::GpSeUncertain,
        strategy: ProbeStrategy::Random,
    },
    TteCurveSpec {
        name: "gp-se+ard",
        method: Method::GpSeUncertain,
        strategy: ProbeStrategy::Ard,
    },
];

/// Success rate against the number of revealed bins. Exploration continues
/// past the first safe configuration. Ensemble member `j` uses bootstrap
/// resample `j` of the states and, for the Random strategy, its own probe
/// order per state; deterministic strategies share one order.
pub fn tte_curves(
    states: &[AnnotatedState],
    models: &ModelSet,
    exploration: Option<&ExplorationForest>,
    curves: &[TteCurveSpec],
    fraction: f64,
    ensemble: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if states.is_empty() || ensemble == 0 {
        return Err(Error::Parameter("TTE curves need states and at least one ensemble member".into()));
    }
    let starts = states
        .iter()
        .map(|s| tte_start(s, fraction))
        .collect::<Result<Vec<_>>>()?;
    let missing = starts[0].0.missing_bins().len();
    let mut out = Vec::new();
    for spec in curves {
        let qpdf = models.qpdf(spec.method);
        // hits[member][state][k]
        let mut hits: Vec<Vec<Vec<bool>>> = Vec::with_capacity(ensemble);
        let deterministic = spec.strategy != ProbeStrategy::Random;
        for j in 0..ensemble {
            if deterministic && j > 0 {
                let first = hits[0].clone();
                hits.push(first);
                continue;
            }
            let mut member = Vec::with_capacity(states.len());
            for (i, (a, (start, truth))) in states.iter().zip(&starts).enumerate() {
                let mut strategy: Box<dyn Strategy> = match spec.strategy {
                    ProbeStrategy::Random => Box::new(RandomStrategy {
                        seed: seed::derive(seed, &[0x7e, j as u64, i as u64]),
                    }),
                    ProbeStrategy::Ard => Box::new(ArdStrategy {
                        qpdf: &models.gp_se,
                        models: models.gp_se.models(),
                    }),
                    ProbeStrategy::Rl => Box::new(RlStrategy {
                        forest: exploration
                            .ok_or_else(|| Error::Parameter("the RL curve needs an exploration forest".into()))?,
                    }),
                };
                let order = full_reveal_order(start, truth, strategy.as_mut())?;
                member.push(reveal_hits(a, start, truth, &order, qpdf.as_ref())?);
            }
            hits.push(member);
        }
        for k in 0..=missing {
            out.push(ensemble_point(spec.name, k as f64, states.len(), ensemble, seed, |j, i| hits[j][i][k]));
        }
    }
    Ok(out)
}

/// Front-occluded copies of training states for RL rollouts.
pub fn rl_training_states(states: &[AnnotatedState], fraction: f64) -> Result<Vec<(TteState, Dem)>> {
    states.iter().map(|s| tte_start(s, fraction)).collect()
}

/// Mean success rate of one named curve, in x order.
pub fn curve(points: &[CurvePoint], method: &str) -> Vec<f64> {
    points.iter().filter(|p| p.method == method).map(|p| p.success_rate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_cover_both_ends() {
        assert_eq!(occlusion_levels(100, 10).len(), 11);
        assert_eq!(occlusion_levels(7, 3), vec![0, 3, 6, 7]);
        assert_eq!(occlusion_levels(4, 0), vec![0, 1, 2, 3, 4]);
    }
}
