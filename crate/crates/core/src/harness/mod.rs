//! Evaluation harness: annotated states, the success-rate metric, the
//! occlusion and exploration experiments, and their configuration.

pub mod config;
pub mod experiments;
pub mod models;
pub mod pipeline;
pub mod world;

use std::fmt::Write;

use rand::Rng;

use crate::dem::{parse_value, split_state, Dem, DemGeometry, StateVector, PROPRIO_DIM};
use crate::error::{Error, Result};
use crate::flipper::{FlipperConfig, Label};
use crate::seed;

pub use config::Config;

/// A fully observed state with one operator annotation per configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedState {
    state: StateVector,
    geometry: DemGeometry,
    labels: [Label; FlipperConfig::COUNT],
}

impl AnnotatedState {
    pub fn new(state: StateVector, geometry: DemGeometry, labels: [Label; FlipperConfig::COUNT]) -> Result<Self> {
        if state.missing_count() != 0 {
            return Err(Error::Validation("annotated states must be fully observed".into()));
        }
        split_state(&state, geometry)?;
        if !labels.iter().any(|l| l.is_permitted()) {
            return Err(Error::Validation("no configuration is annotated as permitted".into()));
        }
        Ok(AnnotatedState {
            state,
            geometry,
            labels,
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn geometry(&self) -> DemGeometry {
        self.geometry
    }

    pub fn labels(&self) -> &[Label; FlipperConfig::COUNT] {
        &self.labels
    }

    pub fn is_permitted(&self, c: FlipperConfig) -> bool {
        self.labels[c.index()].is_permitted()
    }

    /// Ground-truth DEM.
    pub fn dem(&self) -> Dem {
        split_state(&self.state, self.geometry).expect("validated at construction").1
    }

    /// The state as a sensor would see it with `dem`'s mask applied.
    pub fn with_dem_mask(&self, dem: &Dem) -> StateVector {
        let mut values = self.state.values().to_vec();
        for b in 0..dem.bins() {
            if dem.is_missing(b) {
                values[PROPRIO_DIM + b] = f64::NAN;
            }
        }
        StateVector::from_values(values)
    }
}

/// Per-state outcome of `policy`: did it pick a permitted configuration.
pub fn successes(
    states: &[AnnotatedState],
    mut policy: impl FnMut(&AnnotatedState) -> Result<FlipperConfig>,
) -> Result<Vec<bool>> {
    states.iter().map(|s| Ok(s.is_permitted(policy(s)?))).collect()
}

/// Fraction of states in which `policy` picks a permitted configuration.
pub fn success_rate(
    states: &[AnnotatedState],
    policy: impl FnMut(&AnnotatedState) -> Result<FlipperConfig>,
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::Parameter("success rate of an empty state set".into()));
    }
    let hits = successes(states, policy)?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// One point of a success-rate curve with its seed-ensemble quartiles.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub method: String,
    pub x: f64,
    pub success_rate: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of unsorted `values`.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Bootstrap resample of `0..n` for ensemble member `member`. Members share
/// resamples across methods so that curves are compared on the same draws.
pub fn bootstrap_indices(n: usize, seed: u64, member: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed, &[0xb007, member as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Mean and quartiles over ensemble members. `hits(member, i)` is the
/// outcome of state `i` as seen by `member`.
pub fn ensemble_point(
    method: &str,
    x: f64,
    n_states: usize,
    members: usize,
    seed: u64,
    hits: impl Fn(usize, usize) -> bool,
) -> CurvePoint {
    let rates: Vec<f64> = (0..members)
        .map(|j| {
            let idx = bootstrap_indices(n_states, seed, j);
            idx.iter().filter(|&&i| hits(j, i)).count() as f64 / n_states as f64
        })
        .collect();
    CurvePoint {
        method: method.to_string(),
        x,
        success_rate: rates.iter().sum::<f64>() / members as f64,
        q25: quantile(&rates, 0.25),
        q75: quantile(&rates, 0.75),
    }
}

pub const CSV_HEADER: &str = "method,x,success_rate,q25,q75";

pub fn write_csv(points: &[CurvePoint]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for p in points {
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6}", p.method, p.x, p.success_rate, p.q25, p.q75);
    }
    s
}

pub fn read_csv(text: &str) -> Result<Vec<CurvePoint>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header {CSV_HEADER:?}"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::parse(i + 1, "expected five fields"));
            }
            let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::parse(i + 1, format!("bad number {t:?}")));
            Ok(CurvePoint {
                method: f[0].to_string(),
                x: num(f[1])?,
                success_rate: num(f[2])?,
                q25: num(f[3])?,
                q75: num(f[4])?,
            })
        })
        .collect()
}

const ANNOTATED_HEADER: &str = "qpdf-annotated";

/// One state per line: five labels (+1/-1) then the state values, under the
/// header `qpdf-annotated n <n> rows <r> cols <c> proprio_dim <p>`.
pub fn write_annotated(states: &[AnnotatedState], geometry: DemGeometry) -> String {
    let mut s = format!(
        "{ANNOTATED_HEADER} n {} rows {} cols {} proprio_dim {PROPRIO_DIM}\n",
        PROPRIO_DIM + geometry.bins(),
        geometry.rows,
        geometry.cols
    );
    for a in states {
        let labels: Vec<String> = a.labels.iter().map(|l| format!("{}", l.value())).collect();
        s.push_str(&labels.join(" "));
        for v in a.state.values() {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_annotated(text: &str) -> Result<(Vec<AnnotatedState>, DemGeometry)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty annotated state file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    let field = |i: usize, key: &str| -> Result<usize> {
        if h.get(i) != Some(&key) {
            return Err(Error::parse(1, format!("expected {key:?} in header")));
        }
        h.get(i + 1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(1, format!("bad {key} value")))
    };
    if h.first() != Some(&ANNOTATED_HEADER) || h.len() != 9 {
        return Err(Error::parse(1, format!("expected a {ANNOTATED_HEADER} header")));
    }
    let n = field(1, "n")?;
    let geometry = DemGeometry::new(field(3, "rows")?, field(5, "cols")?);
    if field(7, "proprio_dim")? != PROPRIO_DIM || n != PROPRIO_DIM + geometry.bins() {
        return Err(Error::parse(1, "state length does not match the grid"));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != FlipperConfig::COUNT + n {
            return Err(Error::parse(i + 1, format!("expected {} fields", FlipperConfig::COUNT + n)));
        }
        let mut labels = [Label::Forbidden; FlipperConfig::COUNT];
        for (k, l) in labels.iter_mut().enumerate() {
            let v: f64 = t[k].parse().map_err(|_| Error::parse(i + 1, "bad label"))?;
            *l = Label::from_value(v).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        let values = t[FlipperConfig::COUNT..]
            .iter()
            .map(|tok| parse_value(tok).ok_or_else(|| Error::parse(i + 1, format!("bad value {tok:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let state = AnnotatedState::new(StateVector::from_values(values), geometry, labels)
            .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(state);
    }
    Ok((out, geometry))
}
