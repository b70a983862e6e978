//! Tactile terrain exploration: strategies that pick which occluded DEM bin
//! to probe next, the explore-until-safe loop, and training of the learned
//! (RL) strategy.

use std::fmt;

use rand::Rng;

use crate::dem::{Dem, DemGeometry, StateVector, PROPRIO_DIM};
use crate::error::{Error, Result};
use crate::flipper::FlipperConfig;
use crate::forest::{BinLayout, ForestParams, TrainingSet, TreeEnsemble};
use crate::gp::GpModel;
use crate::policy::{best_expected, best_safety, select_action, ActionDecision, QpdfModel};
use crate::seed;

/// Value that stands in for a missing height in exploration features.
pub const MISSING_SENTINEL: f64 = -9.0;

/// An AT state together with the set of bins still unmeasured.
#[derive(Clone, Debug, PartialEq)]
pub struct TteState {
    state: StateVector,
    geometry: DemGeometry,
    missing_bins: Vec<usize>,
}

impl TteState {
    pub fn new(state: StateVector, geometry: DemGeometry) -> Result<Self> {
        if state.len() != PROPRIO_DIM + geometry.bins() {
            return Err(Error::Validation("state length does not match the grid".into()));
        }
        if (0..PROPRIO_DIM).any(|f| state.is_missing(f)) {
            return Err(Error::Validation("proprioceptive features may not be missing".into()));
        }
        let missing_bins = (0..geometry.bins())
            .filter(|&b| state.is_missing(PROPRIO_DIM + b))
            .collect();
        Ok(TteState {
            state,
            geometry,
            missing_bins,
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn geometry(&self) -> DemGeometry {
        self.geometry
    }

    /// Missing DEM bins in ascending order.
    pub fn missing_bins(&self) -> &[usize] {
        &self.missing_bins
    }

    pub fn is_final_candidate(&self) -> bool {
        self.missing_bins.is_empty()
    }

    /// Writes the measured height of `bin` into the state.
    pub fn reveal(&mut self, bin: usize, height: f64) -> Result<()> {
        let pos = self
            .missing_bins
            .binary_search(&bin)
            .map_err(|_| Error::Validation(format!("bin {bin} is not missing")))?;
        if !height.is_finite() {
            return Err(Error::Validation("revealed height must be finite".into()));
        }
        self.missing_bins.remove(pos);
        self.state.set(PROPRIO_DIM + bin, height);
        Ok(())
    }

    /// Feature vector for the exploration forest: state values with the
    /// sentinel in missing slots, the missing mask as 0/1, then the row and
    /// column of the candidate bin.
    pub fn features(&self, bin: usize) -> Vec<f64> {
        let mut f = Vec::with_capacity(exploration_dim(self.geometry));
        f.extend(
            self.state
                .values()
                .iter()
                .map(|v| if v.is_nan() { MISSING_SENTINEL } else { *v }),
        );
        f.extend(
            (0..self.geometry.bins()).map(|b| if self.state.is_missing(PROPRIO_DIM + b) { 1.0 } else { 0.0 }),
        );
        let (r, c) = self.geometry.row_col(bin);
        f.push(r as f64);
        f.push(c as f64);
        f
    }
}

/// Length of [`TteState::features`] for a grid.
pub fn exploration_dim(g: DemGeometry) -> usize {
    PROPRIO_DIM + 2 * g.bins() + 2
}

/// Picks the next bin to probe.
pub trait Strategy {
    /// `step` counts probes already made in the current rollout.
    fn select(&mut self, state: &TteState, step: usize) -> Result<usize>;
}

/// Uniform choice among missing bins; the draw depends only on the seed
/// and the step counter.
#[derive(Clone, Debug)]
pub struct RandomStrategy {
    pub seed: u64,
}

impl Strategy for RandomStrategy {
    fn select(&mut self, state: &TteState, step: usize) -> Result<usize> {
        random_pick(state, self.seed, step)
    }
}

fn random_pick(state: &TteState, seed: u64, step: usize) -> Result<usize> {
    let bins = state.missing_bins();
    if bins.is_empty() {
        return Err(Error::FinalState);
    }
    let mut rng = seed::rng(seed, &[step as u64]);
    Ok(bins[rng.random_range(0..bins.len())])
}

/// Probe the most relevant missing bin of the most promising model: take
/// the configuration with the highest expected q, then the missing bin
/// whose length scale in that configuration's GP is smallest.
pub struct ArdStrategy<'a> {
    pub qpdf: &'a dyn QpdfModel,
    pub models: &'a [GpModel],
}

impl Strategy for ArdStrategy<'_> {
    fn select(&mut self, state: &TteState, _step: usize) -> Result<usize> {
        let bins = state.missing_bins();
        if bins.is_empty() {
            return Err(Error::FinalState);
        }
        let c = best_expected(&self.qpdf.expected(state.state())?);
        let ard = self.models[c.index()].ard_values();
        Ok(min_ard_bin(ard, bins))
    }
}

/// Missing bin with the smallest length scale; ties go to the lowest bin.
pub fn min_ard_bin(ard: &[f64], missing_bins: &[usize]) -> usize {
    let mut best = missing_bins[0];
    for &b in &missing_bins[1..] {
        if ard[PROPRIO_DIM + b] < ard[PROPRIO_DIM + best] {
            best = b;
        }
    }
    best
}

/// Regression forest over (TTE state, bin) pairs estimating the return of
/// probing that bin.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationForest {
    pub params: ForestParams,
    pub ensemble: TreeEnsemble,
    pub geometry: DemGeometry,
}

impl ExplorationForest {
    pub fn value(&self, state: &TteState, bin: usize) -> f64 {
        self.ensemble.summary(&state.features(bin)).expected_q
    }

    /// Best missing bin and its value; ties go to the lowest bin.
    pub fn best(&self, state: &TteState) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for &b in state.missing_bins() {
            let v = self.value(state, b);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((b, v));
            }
        }
        best
    }
}

/// Greedy strategy on a trained exploration forest.
pub struct RlStrategy<'a> {
    pub forest: &'a ExplorationForest,
}

impl Strategy for RlStrategy<'_> {
    fn select(&mut self, state: &TteState, _step: usize) -> Result<usize> {
        self.forest.best(state).map(|(b, _)| b).ok_or(Error::FinalState)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    SafeFound { config: FlipperConfig, probes: usize },
    Exhausted,
}

/// One probe and what the controller concluded right after it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub bin: usize,
    pub height: f64,
    pub best_safety: f64,
    pub chosen: Option<FlipperConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationTrace {
    pub initial_safety: f64,
    pub probes: Vec<Probe>,
    pub outcome: Outcome,
}

impl ExplorationTrace {
    pub fn probed_bins(&self) -> Vec<usize> {
        self.probes.iter().map(|p| p.bin).collect()
    }

    /// Best safety at every evaluation, starting with the initial state.
    pub fn safety_per_step(&self) -> Vec<f64> {
        std::iter::once(self.initial_safety)
            .chain(self.probes.iter().map(|p| p.best_safety))
            .collect()
    }
}

impl fmt::Display for ExplorationTrace {
    /// One line per probe: `step bin height best_safety chosen`, with `-`
    /// when no configuration passed the gate.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# step bin height best_safety chosen")?;
        writeln!(f, "# initial best_safety {}", self.initial_safety)?;
        for (i, p) in self.probes.iter().enumerate() {
            let chosen = p.chosen.map_or("-".to_string(), |c| c.id().to_string());
            writeln!(f, "{} {} {} {} {}", i + 1, p.bin, p.height, p.best_safety, chosen)?;
        }
        match self.outcome {
            Outcome::SafeFound { config, probes } => writeln!(f, "# safe {} after {probes} probes", config.id()),
            Outcome::Exhausted => writeln!(f, "# exhausted"),
        }
    }
}

fn check_ground_truth(initial: &TteState, truth: &Dem) -> Result<()> {
    if truth.geometry() != &initial.geometry() {
        return Err(Error::Validation("ground truth grid differs from the state grid".into()));
    }
    if !truth.is_fully_observed() || truth.true_heights().iter().any(|h| !h.is_finite()) {
        return Err(Error::Validation("ground truth must be fully observed".into()));
    }
    for b in 0..truth.bins() {
        if let Some(v) = initial.state().get(PROPRIO_DIM + b) {
            if v != truth.true_height(b) {
                return Err(Error::Validation(format!("observed bin {b} disagrees with ground truth")));
            }
        }
    }
    Ok(())
}

/// Probes bins chosen by `strategy` until some configuration passes the
/// safety gate, no bins remain, or `max_probes` is reached (`None` means
/// no limit).
pub fn explore_until_safe(
    initial: &TteState,
    truth: &Dem,
    strategy: &mut dyn Strategy,
    model: &dyn QpdfModel,
    epsilon: f64,
    max_probes: Option<usize>,
) -> Result<ExplorationTrace> {
    check_ground_truth(initial, truth)?;
    let limit = max_probes.unwrap_or(usize::MAX);
    let mut state = initial.clone();
    let mut probes: Vec<Probe> = Vec::new();
    let mut initial_safety = 0.0;
    loop {
        let summaries = model.summaries(state.state())?;
        let decision = select_action(&summaries, epsilon);
        let best = best_safety(&summaries);
        match probes.last_mut() {
            Some(p) => {
                p.best_safety = best;
                p.chosen = decision.config();
            }
            None => initial_safety = best,
        }
        let outcome = match decision {
            ActionDecision::Chosen { config, .. } => Some(Outcome::SafeFound {
                config,
                probes: probes.len(),
            }),
            ActionDecision::NoSafeAction { .. } if state.missing_bins().is_empty() || probes.len() >= limit => {
                Some(Outcome::Exhausted)
            }
            ActionDecision::NoSafeAction { .. } => None,
        };
        if let Some(outcome) = outcome {
            return Ok(ExplorationTrace {
                initial_safety,
                probes,
                outcome,
            });
        }
        let bin = strategy.select(&state, probes.len())?;
        let height = truth.true_height(bin);
        state.reveal(bin, height)?;
        probes.push(Probe {
            bin,
            height,
            best_safety: 0.0,
            chosen: None,
        });
    }
}

/// Order in which a strategy reveals every missing bin, ignoring safety.
pub fn full_reveal_order(initial: &TteState, truth: &Dem, strategy: &mut dyn Strategy) -> Result<Vec<usize>> {
    check_ground_truth(initial, truth)?;
    let mut state = initial.clone();
    let mut order = Vec::with_capacity(state.missing_bins().len());
    while !state.missing_bins().is_empty() {
        let b = strategy.select(&state, order.len())?;
        state.reveal(b, truth.true_height(b))?;
        order.push(b);
    }
    Ok(order)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RlParams {
    pub episodes: usize,
    pub rollouts_per_episode: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Probability of following the learned policy after the first episode.
    pub mix: f64,
    pub forest: ForestParams,
}

impl Default for RlParams {
    fn default() -> Self {
        RlParams {
            episodes: 5,
            rollouts_per_episode: 2000,
            alpha: 0.5,
            gamma: 0.8,
            epsilon: crate::policy::DEFAULT_EPSILON,
            mix: 0.5,
            forest: ForestParams {
                n_trees: 16,
                ..ForestParams::default()
            },
        }
    }
}

/// Counts of who made each probing decision in one episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EpisodeStats {
    pub learned: usize,
    pub random: usize,
    pub rollouts: usize,
    pub safe: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlReport {
    pub forest: ExplorationForest,
    pub episodes: Vec<EpisodeStats>,
    pub transitions: usize,
}

struct ExpTransition {
    features: Vec<f64>,
    next: Option<TteState>,
    reward: f64,
    q: f64,
}

/// Trains the exploration forest. Episode 0 rolls out the Random strategy;
/// later episodes follow the current forest with probability `mix` and
/// Random otherwise. A rollout that reaches safety after `n` probes earns
/// `1/n` on its last probe, an exhausted rollout earns nothing. After each
/// episode the aggregated targets take one Q-learning step against the
/// previous forest (fresh transitions start from their reward) and the
/// forest is refit.
pub fn train_rl_strategy(
    states: &[(TteState, Dem)],
    model: &dyn QpdfModel,
    params: &RlParams,
    seed: u64,
) -> Result<RlReport> {
    if states.is_empty() || states.iter().all(|(s, _)| s.missing_bins().is_empty()) {
        return Err(Error::Parameter("RL training needs occluded training states".into()));
    }
    if params.episodes == 0 || params.rollouts_per_episode == 0 {
        return Err(Error::Parameter("RL training needs at least one episode and rollout".into()));
    }
    for (s, truth) in states {
        check_ground_truth(s, truth)?;
    }
    let geometry = states[0].0.geometry();
    let dim = exploration_dim(geometry);
    let mut data: Vec<ExpTransition> = Vec::new();
    let mut forest: Option<ExplorationForest> = None;
    let mut stats = Vec::with_capacity(params.episodes);

    for episode in 0..params.episodes {
        let mut ep = EpisodeStats::default();
        let fresh_from = data.len();
        for r in 0..params.rollouts_per_episode {
            let mut rng = seed::rng(seed, &[episode as u64, r as u64]);
            let (start, truth) = &states[rng.random_range(0..states.len())];
            let random_seed: u64 = rng.random();
            let mut state = start.clone();
            let mut rollout: Vec<(Vec<f64>, TteState)> = Vec::new();
            let mut safe = false;
            loop {
                let summaries = model.summaries(state.state())?;
                if select_action(&summaries, params.epsilon).is_safe() {
                    safe = true;
                    break;
                }
                if state.missing_bins().is_empty() {
                    break;
                }
                let use_learned = episode > 0 && rng.random::<f64>() < params.mix;
                let bin = match (&forest, use_learned) {
                    (Some(f), true) => {
                        ep.learned += 1;
                        f.best(&state).map(|(b, _)| b).ok_or(Error::FinalState)?
                    }
                    _ => {
                        ep.random += 1;
                        random_pick(&state, random_seed, rollout.len())?
                    }
                };
                let features = state.features(bin);
                state.reveal(bin, truth.true_height(bin))?;
                rollout.push((features, state.clone()));
            }
            ep.rollouts += 1;
            ep.safe += usize::from(safe);
            let n = rollout.len();
            for (t, (features, next)) in rollout.into_iter().enumerate() {
                let last = t + 1 == n;
                let reward = if last && safe { 1.0 / n as f64 } else { 0.0 };
                data.push(ExpTransition {
                    features,
                    next: if last { None } else { Some(next) },
                    reward,
                    q: reward,
                });
            }
        }
        if let Some(f) = &forest {
            for (i, tr) in data.iter_mut().enumerate() {
                let base = if i >= fresh_from { tr.reward } else { tr.q };
                let future = tr.next.as_ref().and_then(|s| f.best(s)).map_or(0.0, |(_, v)| v);
                let current = f.ensemble.summary(&tr.features).expected_q;
                tr.q = base + params.alpha * (tr.reward + params.gamma * future - current);
            }
        }
        stats.push(ep);
        if data.is_empty() {
            continue;
        }
        let mut set = TrainingSet::new(dim);
        for tr in &data {
            set.push(&tr.features, tr.q)?;
        }
        let layout = BinLayout::covering(set.targets(), params.forest.bins, params.forest.pad)?;
        let ensemble = TreeEnsemble::train(&set, layout, &params.forest, seed::derive(seed, &[0xe0, episode as u64]))?;
        forest = Some(ExplorationForest {
            params: params.forest,
            ensemble,
            geometry,
        });
    }
    let forest = forest.ok_or_else(|| {
        Error::Parameter("every rollout started safe; no exploration data was collected".into())
    })?;
    Ok(RlReport {
        forest,
        episodes: stats,
        transitions: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::{assemble_state, occlude_front, Proprio};
    use crate::policy::QpdfSummary;

    fn summary(q: f64, s: f64) -> QpdfSummary {
        QpdfSummary {
            expected_q: q,
            safety: s,
        }
    }

    /// Safe exactly when `key` bin has been observed.
    struct Planted {
        key: usize,
    }

    impl QpdfModel for Planted {
        fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; 5]> {
            let s = if x.is_missing(PROPRIO_DIM + self.key) { 0.5 } else { 0.95 };
            Ok([summary(1.0, s), summary(0.5, 0.1), summary(0.0, 0.1), summary(0.0, 0.1), summary(0.0, 0.1)])
        }
    }

    fn occluded(count: usize) -> (TteState, Dem) {
        let g = DemGeometry::new(4, 3);
        let truth = Dem::from_heights(g, (0..12).map(|i| (i % 4) as f64 * 0.05).collect()).unwrap();
        let dem = occlude_front(&truth, count).unwrap();
        let s = assemble_state(&Proprio::zeroed(FlipperConfig::I_SHAPE), &dem);
        (TteState::new(s, g).unwrap(), truth)
    }

    #[test]
    fn reveal_changes_one_entry() {
        let (mut s, truth) = occluded(5);
        let before = s.state().clone();
        s.reveal(2, truth.true_height(2)).unwrap();
        let changed: Vec<usize> = (0..before.len())
            .filter(|&i| before.values()[i].to_bits() != s.state().values()[i].to_bits())
            .collect();
        assert_eq!(changed, vec![PROPRIO_DIM + 2]);
        assert_eq!(s.missing_bins(), &[0, 1, 3, 4]);
        assert!(s.reveal(2, 0.0).is_err());
    }

    #[test]
    fn random_strategy_edge_cases() {
        let (s, _) = occluded(1);
        assert_eq!(RandomStrategy { seed: 3 }.select(&s, 0).unwrap(), 0);
        let (s, _) = occluded(8);
        let a: Vec<usize> = (0..10).map(|k| RandomStrategy { seed: 4 }.select(&s, k).unwrap()).collect();
        let b: Vec<usize> = (0..10).map(|k| RandomStrategy { seed: 4 }.select(&s, k).unwrap()).collect();
        assert_eq!(a, b);
        let (s, _) = occluded(0);
        assert!(matches!(RandomStrategy { seed: 0 }.select(&s, 0), Err(Error::FinalState)));
    }

    #[test]
    fn already_safe_needs_no_probe() {
        let (s, truth) = occluded(6);
        let model = Planted { key: 11 };
        let t = explore_until_safe(&s, &truth, &mut RandomStrategy { seed: 1 }, &model, 0.8, None).unwrap();
        assert_eq!(t.outcome, Outcome::SafeFound { config: FlipperConfig::I_SHAPE, probes: 0 });
    }

    #[test]
    fn zero_budget_exhausts_immediately() {
        let (s, truth) = occluded(6);
        let model = Planted { key: 2 };
        let t = explore_until_safe(&s, &truth, &mut RandomStrategy { seed: 1 }, &model, 0.8, Some(0)).unwrap();
        assert_eq!(t.outcome, Outcome::Exhausted);
        assert!(t.probes.is_empty());
    }

    #[test]
    fn exploration_stops_when_key_bin_is_seen() {
        let (s, truth) = occluded(9);
        let model = Planted { key: 4 };
        let t = explore_until_safe(&s, &truth, &mut RandomStrategy { seed: 7 }, &model, 0.8, None).unwrap();
        let bins = t.probed_bins();
        assert_eq!(*bins.last().unwrap(), 4);
        assert!(bins[..bins.len() - 1].iter().all(|&b| b != 4));
        let mut sorted = bins.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), bins.len());
        assert_eq!(t.outcome, Outcome::SafeFound { config: FlipperConfig::I_SHAPE, probes: bins.len() });
        assert_eq!(t.probes.last().unwrap().height, truth.true_height(4));
        assert!(t.to_string().lines().count() == bins.len() + 3);
    }

    #[test]
    fn inconsistent_ground_truth_is_rejected() {
        let (s, truth) = occluded(3);
        let mut wrong = truth.clone();
        wrong.set_observed(11, 9.0);
        let model = Planted { key: 0 };
        assert!(matches!(
            explore_until_safe(&s, &wrong, &mut RandomStrategy { seed: 0 }, &model, 0.8, None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ard_picks_shortest_missing_length_scale() {
        let mut ard = vec![1.0; PROPRIO_DIM + 12];
        ard[PROPRIO_DIM + 7] = 0.1;
        ard[PROPRIO_DIM + 1] = 0.05;
        assert_eq!(min_ard_bin(&ard, &[0, 3, 7, 9]), 7);
        assert_eq!(min_ard_bin(&ard, &[3, 9]), 3);
        assert_eq!(min_ard_bin(&ard, &[9]), 9);
    }

    #[test]
    fn features_encode_mask_and_bin() {
        let (s, _) = occluded(2);
        let f = s.features(7);
        assert_eq!(f.len(), exploration_dim(s.geometry()));
        assert_eq!(f[PROPRIO_DIM], MISSING_SENTINEL);
        assert_eq!(f[PROPRIO_DIM + 12], 1.0);
        assert_eq!(f[PROPRIO_DIM + 12 + 2], 0.0);
        assert_eq!(&f[f.len() - 2..], &[2.0, 1.0]);
    }
}
