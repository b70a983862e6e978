//! Traversal trajectories, the reward, and fitted Q-learning targets.

use std::collections::HashMap;
use std::fmt::Write;

use crate::dem::{parse_value, DemGeometry, StateVector, PROPRIO_DIM};
use crate::error::{Error, Result};
use crate::flipper::{FlipperConfig, Label};

/// Pitch magnitude (rad) above which the pitch penalty grows linearly.
pub const PITCH_THRESHOLD: f64 = 0.5;
/// Roughness (m/s^2) above which the roughness penalty grows linearly.
pub const ROUGHNESS_THRESHOLD: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights {
    pub user: f64,
    pub pitch: f64,
    pub roughness: f64,
}

impl Default for RewardWeights {
    /// The user term dominates so that forbidden actions score negative.
    fn default() -> Self {
        RewardWeights {
            user: 5.0,
            pitch: 1.0,
            roughness: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.user, self.pitch, self.roughness].iter().all(|w| *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Parameter("reward weights must be nonnegative".into()))
        }
    }
}

pub fn pitch_penalty(pitch: f64) -> f64 {
    (pitch.abs() - PITCH_THRESHOLD).max(0.0)
}

pub fn roughness_penalty(roughness: f64) -> f64 {
    (roughness - ROUGHNESS_THRESHOLD).max(0.0)
}

/// Immediate reward: weighted user label minus weighted pitch and
/// roughness penalties.
pub fn reward(label: Label, pitch: f64, roughness: f64, w: &RewardWeights) -> f64 {
    w.user * label.value() - w.pitch * pitch_penalty(pitch) - w.roughness * roughness_penalty(roughness)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: FlipperConfig,
    pub next_state: StateVector,
    pub label: Label,
    pub pitch: f64,
    pub roughness: f64,
    pub terminal: bool,
}

impl Transition {
    pub fn reward(&self, w: &RewardWeights) -> f64 {
        reward(self.label, self.pitch, self.roughness, w)
    }
}

/// Consecutive transitions of one traversal; the last one is terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    transitions: Vec<Transition>,
}

impl Trajectory {
    /// Checks chaining and flags the final transition as terminal.
    pub fn new(mut transitions: Vec<Transition>) -> Result<Self> {
        for w in transitions.windows(2) {
            if w[0].next_state != w[1].state {
                return Err(Error::Validation(
                    "next_state of a transition must equal the following state".into(),
                ));
            }
        }
        let n = transitions.len();
        for (t, tr) in transitions.iter_mut().enumerate() {
            tr.terminal = t + 1 == n;
        }
        Ok(Trajectory { transitions })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QSample {
    pub state: StateVector,
    pub action: FlipperConfig,
    pub q: f64,
}

/// Anything that can evaluate `Q(c, x)`. `None` marks an undefined entry.
pub trait QFunction {
    fn q_value(&self, c: FlipperConfig, x: &StateVector) -> Option<f64>;

    /// `max_c Q(c, x)`, or `None` if some configuration is undefined.
    fn max_q(&self, x: &StateVector) -> Option<f64> {
        FlipperConfig::ALL
            .iter()
            .map(|&c| self.q_value(c, x))
            .try_fold(f64::NEG_INFINITY, |m, q| q.map(|q| m.max(q)))
    }
}

impl<F: Fn(FlipperConfig, &StateVector) -> Option<f64>> QFunction for F {
    fn q_value(&self, c: FlipperConfig, x: &StateVector) -> Option<f64> {
        self(c, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QParams {
    pub alpha: f64,
    pub gamma: f64,
    pub iters: usize,
    /// Stop once no target moves by more than this in one iteration.
    pub tol: f64,
    pub weights: RewardWeights,
}

impl Default for QParams {
    fn default() -> Self {
        QParams {
            alpha: 0.5,
            gamma: 0.3,
            iters: 20,
            tol: 1e-4,
            weights: RewardWeights::default(),
        }
    }
}

impl QParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Parameter("alpha and gamma must lie in [0, 1]".into()));
        }
        if self.iters == 0 {
            return Err(Error::Parameter("at least one iteration is required".into()));
        }
        self.weights.validate()
    }
}

/// Immediate rewards of every transition, in trajectory order.
pub fn rewards(trajectories: &[Trajectory], w: &RewardWeights) -> Vec<f64> {
    trajectories
        .iter()
        .flat_map(|t| t.transitions().iter().map(|tr| tr.reward(w)))
        .collect()
}

/// One recurrence step:
/// `q_i = q_{i-1} + alpha (r + gamma max_c' Q(c', x') - Q(c, x))`,
/// with the max term dropped on terminal transitions.
pub fn q_step(
    trajectories: &[Trajectory],
    previous: &[f64],
    model: &impl QFunction,
    alpha: f64,
    gamma: f64,
    w: &RewardWeights,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(previous.len());
    for (k, tr) in trajectories.iter().flat_map(|t| t.transitions()).enumerate() {
        let q_prev = *previous
            .get(k)
            .ok_or_else(|| Error::Parameter("previous targets are shorter than the data".into()))?;
        let current = model
            .q_value(tr.action, &tr.state)
            .ok_or_else(|| Error::UndefinedQ(format!("configuration {} at transition {k}", tr.action)))?;
        let future = if tr.terminal {
            0.0
        } else {
            model
                .max_q(&tr.next_state)
                .ok_or_else(|| Error::UndefinedQ(format!("successor of transition {k}")))?
        };
        out.push(q_prev + alpha * (tr.reward(w) + gamma * future - current));
    }
    Ok(out)
}

fn to_samples(trajectories: &[Trajectory], q: &[f64]) -> Vec<QSample> {
    trajectories
        .iter()
        .flat_map(|t| t.transitions())
        .zip(q)
        .map(|(tr, &q)| QSample {
            state: tr.state.clone(),
            action: tr.action,
            q,
        })
        .collect()
}

/// Targets after `iters` iterations against a fixed model `q_prev`,
/// starting from `q_1 = r`.
pub fn q_targets(
    trajectories: &[Trajectory],
    alpha: f64,
    gamma: f64,
    q_prev: &impl QFunction,
    iters: usize,
    w: &RewardWeights,
) -> Result<Vec<QSample>> {
    let mut q = rewards(trajectories, w);
    for _ in 1..iters {
        q = q_step(trajectories, &q, q_prev, alpha, gamma, w)?;
    }
    Ok(to_samples(trajectories, &q))
}

/// Fitted Q iteration: start from `q_1 = r`, then alternately fit a model
/// to the current targets and apply one recurrence step, until `iters`
/// iterations or the largest change drops below `tol`. Returns the final
/// targets and the number of iterations performed.
pub fn fitted_q_iteration<M: QFunction>(
    trajectories: &[Trajectory],
    params: &QParams,
    mut fit: impl FnMut(&[QSample]) -> Result<M>,
) -> Result<(Vec<QSample>, usize)> {
    params.validate()?;
    let mut q = rewards(trajectories, &params.weights);
    let mut done = 1;
    while done < params.iters {
        let model = fit(&to_samples(trajectories, &q))?;
        let next = q_step(trajectories, &q, &model, params.alpha, params.gamma, &params.weights)?;
        let change = q.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        done += 1;
        if change < params.tol {
            break;
        }
    }
    Ok((to_samples(trajectories, &q), done))
}

/// Exact per-cell mean of q, for finite state sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TabularQ {
    cells: HashMap<(FlipperConfig, Vec<u64>), (f64, usize)>,
}

impl TabularQ {
    pub fn fit(samples: &[QSample]) -> Self {
        let mut cells: HashMap<(FlipperConfig, Vec<u64>), (f64, usize)> = HashMap::new();
        for s in samples {
            let e = cells.entry((s.action, s.state.key())).or_insert((0.0, 0));
            e.0 += s.q;
            e.1 += 1;
        }
        TabularQ { cells }
    }

    pub fn get(&self, c: FlipperConfig, x: &StateVector) -> Option<f64> {
        self.cells.get(&(c, x.key())).map(|&(sum, n)| sum / n as f64)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

impl QFunction for TabularQ {
    fn q_value(&self, c: FlipperConfig, x: &StateVector) -> Option<f64> {
        self.get(c, x)
    }
}

const HEADER: &str = "qpdf-dataset";

fn push_values(s: &mut String, x: &StateVector) {
    for v in x.values() {
        if v.is_nan() {
            s.push_str(" NaN");
        } else {
            let _ = write!(s, " {v}");
        }
    }
}

/// One line per transition:
/// `traj step action s pitch roughness <n state values> <n next-state values>`
/// under the header `qpdf-dataset n <n> rows <r> cols <c> proprio_dim <p>`.
pub fn write_dataset(trajectories: &[Trajectory], geometry: DemGeometry) -> String {
    let n = PROPRIO_DIM + geometry.bins();
    let mut s = format!(
        "{HEADER} n {n} rows {} cols {} proprio_dim {PROPRIO_DIM}\n",
        geometry.rows, geometry.cols
    );
    for (id, t) in trajectories.iter().enumerate() {
        for (step, tr) in t.transitions().iter().enumerate() {
            let _ = write!(
                s,
                "{id} {step} {} {} {} {}",
                tr.action.id(),
                tr.label.value(),
                tr.pitch,
                tr.roughness
            );
            push_values(&mut s, &tr.state);
            push_values(&mut s, &tr.next_state);
            s.push('\n');
        }
    }
    s
}

/// Parses [`write_dataset`] output, returning the trajectories and grid shape.
pub fn read_dataset(text: &str) -> Result<(Vec<Trajectory>, DemGeometry)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty dataset"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    let field = |key: &str| -> Result<usize> {
        h.iter()
            .position(|t| *t == key)
            .and_then(|i| h.get(i + 1))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(1, format!("header lacks {key}")))
    };
    if h.first() != Some(&HEADER) {
        return Err(Error::parse(1, "not a dataset file"));
    }
    let (n, rows, cols, pd) = (field("n")?, field("rows")?, field("cols")?, field("proprio_dim")?);
    if pd != PROPRIO_DIM || n != pd + rows * cols {
        return Err(Error::parse(1, "inconsistent header dimensions"));
    }
    let geometry = DemGeometry::new(rows, cols);

    let mut trajectories = Vec::new();
    let mut current: Vec<Transition> = Vec::new();
    let mut current_id: Option<u64> = None;
    for (i, line) in lines {
        let ln = i + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 6 + 2 * n {
            return Err(Error::parse(ln, format!("expected {} fields, found {}", 6 + 2 * n, tok.len())));
        }
        let num = |t: &str| -> Result<f64> { parse_value(t).ok_or_else(|| Error::parse(ln, format!("bad value {t:?}"))) };
        let id: u64 = tok[0].parse().map_err(|_| Error::parse(ln, "bad trajectory id"))?;
        let step: usize = tok[1].parse().map_err(|_| Error::parse(ln, "bad step"))?;
        let action: FlipperConfig = tok[2].parse().map_err(|_| Error::parse(ln, "bad action"))?;
        let label = Label::from_value(num(tok[3])?).map_err(|e| Error::parse(ln, e.to_string()))?;
        let values = |range: std::ops::Range<usize>| -> Result<StateVector> {
            Ok(StateVector::from_values(tok[range].iter().map(|t| num(t)).collect::<Result<_>>()?))
        };
        if current_id != Some(id) {
            if !current.is_empty() {
                trajectories.push(Trajectory::new(std::mem::take(&mut current))?);
            }
            current_id = Some(id);
        }
        if step != current.len() {
            return Err(Error::parse(ln, "steps must count up from 0 within a trajectory"));
        }
        current.push(Transition {
            state: values(6..6 + n)?,
            action,
            next_state: values(6 + n..6 + 2 * n)?,
            label,
            pitch: num(tok[4])?,
            roughness: num(tok[5])?,
            terminal: false,
        });
    }
    if !current.is_empty() {
        trajectories.push(Trajectory::new(current)?);
    }
    Ok((trajectories, geometry))
}
