//! Safety measure, gated action selection and the planar least-squares
//! reconstruction baseline.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::dem::{Dem, StateVector};
use crate::error::Result;
use crate::flipper::FlipperConfig;
use crate::forest::{Forest, QHistogram};
use crate::gp::GaussPred;

/// Default safety threshold.
pub const DEFAULT_EPSILON: f64 = 0.8;

/// A normalized distribution over q values.
pub trait Qpdf {
    fn expected_q(&self) -> f64;

    /// Probability that q >= 0.
    fn safety(&self) -> f64;

    fn summary(&self) -> QpdfSummary {
        QpdfSummary {
            expected_q: self.expected_q(),
            safety: self.safety(),
        }
    }
}

impl Qpdf for QHistogram {
    fn expected_q(&self) -> f64 {
        self.mean()
    }

    fn safety(&self) -> f64 {
        self.mass_above_zero()
    }
}

impl Qpdf for GaussPred {
    fn expected_q(&self) -> f64 {
        self.mean
    }

    fn safety(&self) -> f64 {
        let sd = self.variance.max(0.0).sqrt();
        if sd == 0.0 {
            return if self.mean >= 0.0 { 1.0 } else { 0.0 };
        }
        // 1 - Phi(-mean / sd)
        0.5 * erfc(-self.mean / (sd * std::f64::consts::SQRT_2))
    }
}

/// The two numbers action selection needs from a QPDF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpdfSummary {
    pub expected_q: f64,
    pub safety: f64,
}

/// A per-configuration QPDF model that accepts partially observed states.
pub trait QpdfModel {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]>;

    /// Expected q only; models may override this with something cheaper.
    fn expected(&self, x: &StateVector) -> Result<[f64; FlipperConfig::COUNT]> {
        Ok(self.summaries(x)?.map(|s| s.expected_q))
    }
}

impl QpdfModel for Forest {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]> {
        Ok(FlipperConfig::ALL.map(|c| self.summary(c, x)))
    }
}

pub fn safety(qpdf: &impl Qpdf) -> f64 {
    qpdf.safety()
}

pub fn expected_q(qpdf: &impl Qpdf) -> f64 {
    qpdf.expected_q()
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActionDecision {
    Chosen {
        config: FlipperConfig,
        expected_q: f64,
        safety: f64,
    },
    NoSafeAction {
        safety: [f64; FlipperConfig::COUNT],
    },
}

impl ActionDecision {
    pub fn config(&self) -> Option<FlipperConfig> {
        match self {
            ActionDecision::Chosen { config, .. } => Some(*config),
            ActionDecision::NoSafeAction { .. } => None,
        }
    }

    pub fn is_safe(&self) -> bool {
        matches!(self, ActionDecision::Chosen { .. })
    }
}

/// Highest expected q among configurations with safety above `epsilon`;
/// ties go to the lowest configuration id.
pub fn select_action(qpdfs: &[QpdfSummary; FlipperConfig::COUNT], epsilon: f64) -> ActionDecision {
    let mut best: Option<(FlipperConfig, QpdfSummary)> = None;
    for c in FlipperConfig::ALL {
        let s = qpdfs[c.index()];
        if s.safety > epsilon && best.is_none_or(|(_, b)| s.expected_q > b.expected_q) {
            best = Some((c, s));
        }
    }
    match best {
        Some((config, s)) => ActionDecision::Chosen {
            config,
            expected_q: s.expected_q,
            safety: s.safety,
        },
        None => ActionDecision::NoSafeAction {
            safety: qpdfs.map(|s| s.safety),
        },
    }
}

/// Ungated argmax of expected q (lowest id on ties).
pub fn best_expected(expected: &[f64; FlipperConfig::COUNT]) -> FlipperConfig {
    let mut best = 0;
    for i in 1..expected.len() {
        if expected[i] > expected[best] {
            best = i;
        }
    }
    FlipperConfig::from_index(best)
}

/// Highest safety over all configurations.
pub fn best_safety(qpdfs: &[QpdfSummary; FlipperConfig::COUNT]) -> f64 {
    qpdfs.iter().map(|s| s.safety).fold(0.0, f64::max)
}

/// Fills missing bins from a least-squares plane through the observed ones.
/// With nothing observed the result is flat at zero height.
pub fn lsq_interpolate(dem: &Dem) -> Dem {
    let mut out = dem.clone();
    let missing = dem.missing_bins();
    if missing.is_empty() {
        return out;
    }
    let g = *dem.geometry();
    let observed: Vec<usize> = (0..dem.bins()).filter(|&b| !dem.is_missing(b)).collect();
    if observed.is_empty() {
        for b in missing {
            out.set_observed(b, 0.0);
        }
        return out;
    }
    let coords = |b: usize| {
        let (r, c) = g.row_col(b);
        (r as f64, c as f64)
    };
    let n = observed.len() as f64;
    let (mr, mc) = observed.iter().fold((0.0, 0.0), |(a, b), &bin| {
        let (r, c) = coords(bin);
        (a + r / n, b + c / n)
    });
    // Centered coordinates make the minimum-norm solution fall back to the
    // mean height along any direction the observations do not span.
    let a = DMatrix::from_fn(observed.len(), 3, |i, j| {
        let (r, c) = coords(observed[i]);
        match j {
            0 => 1.0,
            1 => r - mr,
            _ => c - mc,
        }
    });
    let y = DVector::from_iterator(observed.len(), observed.iter().map(|&b| dem.true_height(b)));
    let svd = a.svd(true, true);
    let theta = svd
        .solve(&y, 1e-9)
        .unwrap_or_else(|_| DVector::from_vec(vec![y.mean(), 0.0, 0.0]));
    for b in missing {
        let (r, c) = coords(b);
        let h = theta[0] + theta[1] * (r - mr) + theta[2] * (c - mc);
        out.set_observed(b, g.quantize(h));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::{generate_terrain, occlude_front, DemGeometry, Terrain};

    fn summary(q: f64, s: f64) -> QpdfSummary {
        QpdfSummary {
            expected_q: q,
            safety: s,
        }
    }

    #[test]
    fn histogram_safety_and_mean() {
        let h = QHistogram::new(vec![1.0, 2.0, 3.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(safety(&h), 1.0);
        assert_eq!(expected_q(&h), 2.0);
        let neg = QHistogram::new(vec![-3.0, -2.0, -1.0], vec![1.0, 4.0]).unwrap();
        assert_eq!(safety(&neg), 0.0);
        let sym = QHistogram::new(vec![2.0, 2.5, 3.0, 3.5, 4.0], vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!((expected_q(&sym) - 3.0).abs() < 1e-12);
        let single = QHistogram::new(vec![-1.0, 0.5], vec![1.0]).unwrap();
        assert_eq!(expected_q(&single), -0.25);
    }

    #[test]
    fn gaussian_safety() {
        let g = GaussPred {
            mean: 0.0,
            variance: 4.0,
        };
        assert_eq!(safety(&g), 0.5);
        let high = GaussPred {
            mean: 3.0,
            variance: 1.0,
        };
        assert!((safety(&high) - 0.998_650_101_968_369_9).abs() < 1e-12);
        let point = GaussPred {
            mean: -1.0,
            variance: 0.0,
        };
        assert_eq!(safety(&point), 0.0);
    }

    #[test]
    fn gate_disabled_is_plain_argmax() {
        let q = [
            summary(1.0, 0.3),
            summary(4.0, 0.2),
            summary(2.0, 0.9),
            summary(4.0, 0.1),
            summary(-1.0, 0.01),
        ];
        assert_eq!(select_action(&q, 0.0).config(), Some(FlipperConfig::V_SHAPE));
        assert_eq!(select_action(&q, 0.5).config(), Some(FlipperConfig::L_SHAPE));
        match select_action(&q, 0.95) {
            ActionDecision::NoSafeAction { safety } => assert_eq!(safety[2], 0.9),
            other => panic!("expected no safe action, got {other:?}"),
        }
    }

    #[test]
    fn half_safe_state_triggers_exploration() {
        let q = [summary(0.2, 0.5), summary(-1.0, 0.3), summary(-2.0, 0.2), summary(0.1, 0.48), summary(-3.0, 0.1)];
        assert!(!select_action(&q, DEFAULT_EPSILON).is_safe());
    }

    #[test]
    fn lsq_identity_and_full_occlusion() {
        let g = DemGeometry::default();
        let dem = generate_terrain(&Terrain::Rubble { amp: 0.2 }, g, 4).unwrap();
        assert_eq!(lsq_interpolate(&dem), dem);
        let all = occlude_front(&dem, 100).unwrap();
        let filled = lsq_interpolate(&all);
        assert!(filled.is_fully_observed());
        assert!(filled.true_heights().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn lsq_recovers_a_plane() {
        let g = DemGeometry {
            vertical_resolution: 0.0,
            ..Default::default()
        };
        let plane: Vec<f64> = (0..100)
            .map(|b| {
                let (r, c) = g.row_col(b);
                0.3 - 0.02 * r as f64 + 0.05 * c as f64
            })
            .collect();
        let dem = Dem::from_heights(g, plane.clone()).unwrap();
        let filled = lsq_interpolate(&occlude_front(&dem, 63).unwrap());
        for b in 0..100 {
            assert!((filled.true_height(b) - plane[b]).abs() < 1e-9);
        }
    }

    #[test]
    fn lsq_single_row_extrapolates_flat() {
        let g = DemGeometry {
            vertical_resolution: 0.0,
            ..DemGeometry::new(4, 3)
        };
        let dem = Dem::from_heights(g, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.2]).unwrap();
        let filled = lsq_interpolate(&occlude_front(&dem, 9).unwrap());
        assert!(filled.true_heights().iter().all(|&h| (h - 0.2).abs() < 1e-12));
    }
}
