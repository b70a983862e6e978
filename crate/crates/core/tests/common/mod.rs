//! Independent reference computations shared by the integration suites and
//! the acceptance runner. Each oracle reimplements the quantity from its
//! definition rather than calling the code under test.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qpdf_traverse::dataset::{fitted_q_iteration, QParams, RewardWeights, TabularQ, Trajectory, Transition};
use qpdf_traverse::dem::{assemble_state, occlude_front, Dem, DemGeometry, Proprio, StateVector, PROPRIO_DIM};
use qpdf_traverse::forest::{best_split, BinLayout, Leaf, QHistogram, TrainingSet, TreeEnsemble, TreeNode};
use qpdf_traverse::gp::{lml, lml_and_grad, predict_uncertain, GaussPred, GpModel, KernelKind, KernelParams};
use qpdf_traverse::policy::{QpdfModel, QpdfSummary};
use qpdf_traverse::seed;
use qpdf_traverse::tte::TteState;
use qpdf_traverse::{FlipperConfig, Label, Result};

pub fn rng(tag: u64) -> ChaCha8Rng {
    seed::rng(0x0dac1e, &[tag])
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// Toy MDP: three chained states and two actions (the first two
// configurations); the last state ends the episode whatever is done there.

const TOY_STATES: usize = 3;
const TOY_ACTIONS: [FlipperConfig; 2] = [FlipperConfig::ALL[0], FlipperConfig::ALL[1]];

fn toy_state(s: usize) -> StateVector {
    StateVector::from_values(vec![s as f64])
}

fn toy_next(s: usize, c: FlipperConfig) -> usize {
    (s + 1 + c.index()).min(TOY_STATES - 1)
}

fn toy_transition(s: usize, c: FlipperConfig) -> Transition {
    let k = c.index();
    Transition {
        state: toy_state(s),
        action: c,
        next_state: toy_state(toy_next(s, c)),
        label: if (s + k) % 3 == 0 { Label::Forbidden } else { Label::Permitted },
        pitch: 0.2 * (k + 1) as f64,
        roughness: 2.3 + 0.15 * s as f64,
        terminal: false,
    }
}

/// Every (state, action) start, continuing with a state-dependent action
/// until the last state.
pub fn toy_trajectories() -> Vec<Trajectory> {
    let mut out = Vec::new();
    for s0 in 0..TOY_STATES {
        for c0 in TOY_ACTIONS {
            let mut steps = vec![toy_transition(s0, c0)];
            let mut s = if s0 == TOY_STATES - 1 { None } else { Some(toy_next(s0, c0)) };
            while let Some(cur) = s {
                let c = TOY_ACTIONS[(cur + s0 + c0.index()) % TOY_ACTIONS.len()];
                steps.push(toy_transition(cur, c));
                s = if cur == TOY_STATES - 1 { None } else { Some(toy_next(cur, c)) };
            }
            out.push(Trajectory::new(steps).expect("toy trajectories chain"));
        }
    }
    out
}

/// Optimal action values of the toy MDP by backward value iteration.
pub fn toy_value_iteration(gamma: f64, w: &RewardWeights) -> Vec<[f64; 2]> {
    let mut q = vec![[0.0; 2]; TOY_STATES];
    for s in (0..TOY_STATES).rev() {
        for c in TOY_ACTIONS {
            let tr = toy_transition(s, c);
            let future = if s == TOY_STATES - 1 {
                0.0
            } else {
                q[toy_next(s, c)].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            q[s][c.index()] = tr.reward(w) + gamma * future;
        }
    }
    q
}

/// Largest deviation of tabular fitted-Q targets from value iteration.
/// Configurations outside the toy action set are never available, which the
/// table expresses as a value that never wins the max.
pub fn toy_mdp_max_error(alpha: f64, gamma: f64) -> f64 {
    let params = QParams {
        alpha,
        gamma,
        iters: 20_000,
        tol: 1e-14,
        weights: RewardWeights::default(),
    };
    let trajectories = toy_trajectories();
    let (samples, _) = fitted_q_iteration(&trajectories, &params, |s| {
        let table = TabularQ::fit(s);
        Ok(move |c: FlipperConfig, x: &StateVector| {
            if TOY_ACTIONS.contains(&c) {
                table.get(c, x)
            } else {
                Some(f64::NEG_INFINITY)
            }
        })
    })
    .expect("toy iteration");
    let exact = toy_value_iteration(gamma, &params.weights);
    assert_eq!(samples.len(), trajectories.iter().map(|t| t.len()).sum::<usize>());
    samples
        .iter()
        .map(|s| (s.q - exact[s.state.values()[0] as usize][s.action.index()]).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Forest marginalization against explicit path enumeration.

fn random_histogram(rng: &mut ChaCha8Rng, layout: &BinLayout) -> QHistogram {
    let raw: Vec<f64> = (0..layout.bins()).map(|_| rng.random::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    QHistogram::new(layout.edges().to_vec(), raw.iter().map(|m| m / total).collect()).expect("valid histogram")
}

fn random_structure(rng: &mut ChaCha8Rng, depth: usize, n_features: usize, layout: &BinLayout) -> TreeNode {
    if depth == 0 || rng.random::<f64>() < 0.2 {
        let weight = 0.05 + rng.random::<f64>();
        return TreeNode::leaf(random_histogram(rng, layout), weight);
    }
    let feature = rng.random_range(0..n_features);
    let threshold = rng.random_range(-1.0..1.0);
    let left = random_structure(rng, depth - 1, n_features, layout);
    let right = random_structure(rng, depth - 1, n_features, layout);
    TreeNode::split(feature, threshold, left, right)
}

fn rescale_priors(node: &TreeNode, total: f64) -> TreeNode {
    match node {
        TreeNode::Leaf(l) => TreeNode::leaf(l.histogram().clone(), l.prior() / total),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::split(*feature, *threshold, rescale_priors(left, total), rescale_priors(right, total)),
    }
}

/// Random tree of at most `max_depth` levels whose leaf priors sum to one.
pub fn random_tree(rng: &mut ChaCha8Rng, max_depth: usize, n_features: usize, layout: &BinLayout) -> TreeNode {
    let raw = random_structure(rng, max_depth, n_features, layout);
    let total: f64 = raw.leaves().iter().map(|l| l.prior()).sum();
    rescale_priors(&raw, total)
}

type Constraint = (usize, f64, bool);

fn paths<'a>(node: &'a TreeNode, prefix: &mut Vec<Constraint>, out: &mut Vec<(Vec<Constraint>, &'a Leaf)>) {
    match node {
        TreeNode::Leaf(l) => out.push((prefix.clone(), l)),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            prefix.push((*feature, *threshold, true));
            paths(left, prefix, out);
            prefix.pop();
            prefix.push((*feature, *threshold, false));
            paths(right, prefix, out);
            prefix.pop();
        }
    }
}

/// Expectation over every root-to-leaf path consistent with the observed
/// features of `x`, each weighted by its leaf prior.
pub fn path_enumeration(tree: &TreeNode, x: &[f64]) -> Vec<f64> {
    let mut all = Vec::new();
    paths(tree, &mut Vec::new(), &mut all);
    let consistent: Vec<&Leaf> = all
        .iter()
        .filter(|(cs, _)| cs.iter().all(|&(f, s, left)| x[f].is_nan() || ((x[f] <= s) == left)))
        .map(|(_, l)| *l)
        .collect();
    let total: f64 = consistent.iter().map(|l| l.prior()).sum();
    let bins = consistent[0].histogram().bins();
    let mut mass = vec![0.0; bins];
    for l in consistent {
        for (m, lm) in mass.iter_mut().zip(l.histogram().mass()) {
            *m += l.prior() / total * lm;
        }
    }
    mass
}

/// Largest per-bin deviation of forest prediction from path enumeration
/// over `n_trees` random trees, `masks` random partial masks each.
pub fn forest_oracle_max_error(n_trees: usize, masks: usize, tag: u64) -> f64 {
    let mut rng = rng(tag);
    let layout = BinLayout::uniform(-3.0, 3.0, 12).expect("layout");
    let mut worst: f64 = 0.0;
    for _ in 0..n_trees {
        let n_features = rng.random_range(1..=6);
        let tree = random_tree(&mut rng, 4, n_features, &layout);
        assert!(tree.depth() <= 4);
        let ensemble = TreeEnsemble::new(layout.clone(), vec![tree.clone()]).expect("ensemble");
        for _ in 0..masks {
            let x: Vec<f64> = (0..n_features)
                .map(|_| if rng.random::<f64>() < 0.5 { f64::NAN } else { rng.random_range(-1.2..1.2) })
                .collect();
            let got = ensemble.predict(&x);
            let want = path_enumeration(&tree, &x);
            for (a, b) in got.mass().iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Split search against exhaustive enumeration.

fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Every (feature, midpoint) candidate scored from scratch; the minimum
/// objective wins and ties go to the lowest feature, then threshold.
pub fn exhaustive_split(data: &TrainingSet) -> Option<(usize, f64, f64)> {
    let n = data.len();
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for j in 0..data.n_features() {
        let mut seen: Vec<f64> = (0..n).map(|i| data.value(i, j)).filter(|v| !v.is_nan()).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        for w in seen.windows(2) {
            let s = (w[0] + w[1]) / 2.0;
            let mut r1 = Vec::new();
            let mut r2 = Vec::new();
            for i in 0..n {
                let v = data.value(i, j);
                if v.is_nan() || v <= s {
                    r1.push(data.q(i));
                }
                if v.is_nan() || v > s {
                    r2.push(data.q(i));
                }
            }
            candidates.push((j, s, sse(&r1) + sse(&r2)));
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * best.abs().max(1.0);
    candidates.into_iter().find(|c| c.2 <= best + tol)
}

/// Random small training set with integer-valued features and targets so
/// that exact ties are common.
pub fn random_split_set(rng: &mut ChaCha8Rng) -> TrainingSet {
    let n = rng.random_range(2..=12);
    let f = rng.random_range(1..=4);
    let mut set = TrainingSet::new(f);
    for _ in 0..n {
        let x: Vec<f64> = (0..f)
            .map(|_| {
                if rng.random::<f64>() < 0.15 {
                    f64::NAN
                } else {
                    rng.random_range(0..4) as f64
                }
            })
            .collect();
        set.push(&x, rng.random_range(0..6) as f64).expect("push");
    }
    set
}

/// Number of sets on which best_split disagrees with exhaustive search in
/// feature, threshold, or objective.
pub fn split_oracle_mismatches(n_sets: usize, tag: u64) -> usize {
    let mut rng = rng(tag);
    let mut bad = 0;
    for _ in 0..n_sets {
        let set = random_split_set(&mut rng);
        let indices: Vec<usize> = (0..set.len()).collect();
        let got = best_split(&set, &indices).map(|s| (s.feature, s.threshold, s.objective));
        let want = exhaustive_split(&set);
        let agree = match (got, want) {
            (None, None) => true,
            (Some(g), Some(w)) => g.0 == w.0 && g.1 == w.1 && (g.2 - w.2).abs() <= 1e-9 * w.2.abs().max(1.0),
            _ => false,
        };
        bad += usize::from(!agree);
    }
    bad
}

// ---------------------------------------------------------------------------
// GP checks.

pub struct GpProblem {
    pub kind: KernelKind,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub theta: Vec<f64>,
}

pub fn random_gp_problem(rng: &mut ChaCha8Rng, kind: KernelKind, points: usize) -> GpProblem {
    let dim = rng.random_range(1..=3);
    let inputs: Vec<Vec<f64>> = (0..points).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let targets = inputs
        .iter()
        .map(|x| x.iter().map(|v| (2.0 * v).sin()).sum::<f64>() + 0.1 * normal(rng))
        .collect();
    let mut theta = vec![rng.random_range(-1.0..1.0)];
    theta.extend((0..dim).map(|_| rng.random_range(-1.0..0.7)));
    if kind == KernelKind::Rq {
        theta.push(rng.random_range(-1.0..1.5));
    }
    theta.push(rng.random_range(-4.0..-1.0));
    GpProblem {
        kind,
        inputs,
        targets,
        theta,
    }
}

/// Relative error of the analytic LML gradient against central
/// differences with step `h`, measured in the max norm.
pub fn lml_gradient_rel_error(p: &GpProblem, h: f64) -> f64 {
    let (_, grad) = lml_and_grad(p.kind, &p.inputs, &p.targets, &p.theta).expect("lml gradient");
    let fd: Vec<f64> = (0..p.theta.len())
        .map(|i| {
            let mut up = p.theta.clone();
            let mut down = p.theta.clone();
            up[i] += h;
            down[i] -= h;
            let f = |t: &[f64]| lml(p.kind, &p.inputs, &p.targets, t).expect("lml");
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect();
    let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-8);
    grad.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Worst gradient error over `n` random 8-point problems, alternating
/// kernels.
pub fn worst_lml_gradient_error(n: usize, tag: u64) -> f64 {
    let mut rng = rng(tag);
    (0..n)
        .map(|i| {
            let kind = if i % 2 == 0 { KernelKind::Se } else { KernelKind::Rq };
            lml_gradient_rel_error(&random_gp_problem(&mut rng, kind, 8), 1e-5)
        })
        .fold(0.0, f64::max)
}

pub fn random_se_model(rng: &mut ChaCha8Rng, points: usize) -> GpModel {
    let p = random_gp_problem(rng, KernelKind::Se, points);
    let dim = p.inputs[0].len();
    GpModel::new(p.inputs, p.targets, KernelParams::from_log(KernelKind::Se, dim, &p.theta)).expect("model")
}

/// Random SPD covariance; diagonal when `diagonal` is set.
pub fn random_covariance(rng: &mut ChaCha8Rng, dim: usize, diagonal: bool) -> DMatrix<f64> {
    if diagonal {
        return DMatrix::from_fn(dim, dim, |i, j| if i == j { rng.random_range(0.01..0.3) } else { 0.0 });
    }
    let a = DMatrix::from_fn(dim, dim, |_, _| 0.4 * normal(rng));
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.01
}

/// Largest gap between predict_uncertain with zero input covariance and
/// plain prediction, over mean and variance.
pub fn zero_cov_max_error(n: usize, tag: u64) -> f64 {
    let mut rng = rng(tag);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let model = random_se_model(&mut rng, 10);
        let dim = model.dim();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let u = predict_uncertain(&model, &x, &DMatrix::zeros(dim, dim)).expect("uncertain");
        let p = model.predict(&x);
        worst = worst.max((u.mean - p.mean).abs()).max((u.variance - p.variance).abs());
    }
    worst
}

/// Monte Carlo estimate of the predictive mean and variance under a
/// Gaussian input, with standard errors of both estimates.
pub struct MonteCarlo {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

pub fn monte_carlo_moments(model: &GpModel, mean: &[f64], cov: &DMatrix<f64>, samples: usize, rng: &mut ChaCha8Rng) -> MonteCarlo {
    let dim = mean.len();
    let l = cov.clone().cholesky().expect("covariance is SPD").l();
    let mut ms = Vec::with_capacity(samples);
    let mut vs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z = nalgebra::DVector::from_fn(dim, |_, _| normal(rng));
        let dx = &l * z;
        let x: Vec<f64> = (0..dim).map(|d| mean[d] + dx[d]).collect();
        let p = model.predict(&x);
        ms.push(p.mean);
        vs.push(p.variance);
    }
    let n = samples as f64;
    let m_bar = ms.iter().sum::<f64>() / n;
    let m_var = ms.iter().map(|m| (m - m_bar).powi(2)).sum::<f64>() / (n - 1.0);
    // law of total variance, one term per sample
    let terms: Vec<f64> = ms.iter().zip(&vs).map(|(m, v)| v + (m - m_bar).powi(2)).collect();
    let t_bar = terms.iter().sum::<f64>() / n;
    let t_var = terms.iter().map(|t| (t - t_bar).powi(2)).sum::<f64>() / (n - 1.0);
    MonteCarlo {
        mean: m_bar,
        mean_se: (m_var / n).sqrt(),
        variance: t_bar,
        variance_se: (t_var / n).sqrt(),
    }
}

/// Number of cases (out of `cases`) where moment matching misses the Monte
/// Carlo mean or variance by more than three standard errors.
pub fn moment_matching_failures(cases: usize, samples: usize, tag: u64) -> usize {
    let mut rng = rng(tag);
    let mut bad = 0;
    for i in 0..cases {
        let model = random_se_model(&mut rng, 10);
        let dim = model.dim();
        let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cov = random_covariance(&mut rng, dim, i % 2 == 0);
        let got: GaussPred = predict_uncertain(&model, &mean, &cov).expect("uncertain");
        let mc = monte_carlo_moments(&model, &mean, &cov, samples, &mut rng);
        let ok = (got.mean - mc.mean).abs() <= 3.0 * mc.mean_se && (got.variance - mc.variance).abs() <= 3.0 * mc.variance_se;
        bad += usize::from(!ok);
    }
    bad
}

// ---------------------------------------------------------------------------
// Exploration fixtures.

pub fn summary(q: f64, s: f64) -> QpdfSummary {
    QpdfSummary {
        expected_q: q,
        safety: s,
    }
}

/// Configuration 1 turns safe exactly when bin `key` has been measured;
/// before that its safety is one half.
pub struct PlantedModel {
    pub key: usize,
}

impl QpdfModel for PlantedModel {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]> {
        let s = if x.is_missing(PROPRIO_DIM + self.key) { 0.5 } else { 0.95 };
        Ok([summary(1.0, s), summary(0.2, 0.1), summary(0.0, 0.1), summary(-0.5, 0.05), summary(-1.0, 0.0)])
    }
}

/// A 4x3 grid with random heights and the front `occluded` bins hidden.
pub fn random_occluded_state(rng: &mut ChaCha8Rng, occluded: usize) -> (TteState, Dem) {
    let g = DemGeometry::new(4, 3);
    let heights = (0..g.bins()).map(|_| rng.random_range(-3..=3) as f64 * 0.05).collect();
    let truth = Dem::from_heights(g, heights).expect("dem");
    let dem = occlude_front(&truth, occluded).expect("occlusion");
    let state = assemble_state(&Proprio::zeroed(FlipperConfig::I_SHAPE), &dem);
    (TteState::new(state, g).expect("tte state"), truth)
}
