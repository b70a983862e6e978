//! Variance-minimizing split search with missing-value handling.
//!
//! Samples are rows of a [`TrainingSet`]; a `NaN` feature is missing. A
//! sample whose split feature is missing belongs to both sides, so it is
//! counted in both `R1 = {x <= s}` and `R2 = {x > s}`.

use crate::error::{Error, Result};

/// Row-major feature matrix with q targets. `NaN` marks a missing feature.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    n_features: usize,
    features: Vec<f64>,
    q: Vec<f64>,
}

impl TrainingSet {
    pub fn new(n_features: usize) -> Self {
        TrainingSet {
            n_features,
            features: Vec::new(),
            q: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f64], q: f64) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Parameter(format!(
                "sample has {} features, expected {}",
                x.len(),
                self.n_features
            )));
        }
        if !q.is_finite() {
            return Err(Error::Parameter(format!("non-finite q target {q}")));
        }
        self.features.extend_from_slice(x);
        self.q.push(q);
        Ok(())
    }

    pub fn from_rows(rows: &[Vec<f64>], q: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        let mut set = TrainingSet::new(n);
        for (x, &t) in rows.iter().zip(q) {
            set.push(x, t)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.features[i * self.n_features + feature]
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.q
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// `|R1| var(R1) + |R2| var(R2)`.
    pub objective: f64,
}

/// Relative tolerance under which two split objectives count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// True if `candidate` beats `best` by more than the tie tolerance.
pub fn improves(candidate: f64, best: f64) -> bool {
    candidate < best - TIE_TOLERANCE * best.abs().max(1.0)
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.n += 1.0;
        self.s1 += v;
        self.s2 += v * v;
    }

    fn merged(self, o: Moments) -> Moments {
        Moments {
            n: self.n + o.n,
            s1: self.s1 + o.s1,
            s2: self.s2 + o.s2,
        }
    }

    fn minus(self, o: Moments) -> Moments {
        Moments {
            n: self.n - o.n,
            s1: self.s1 - o.s1,
            s2: self.s2 - o.s2,
        }
    }

    /// Sum of squared deviations, `|R| var(R)`.
    fn sse(&self) -> f64 {
        if self.n <= 0.0 {
            0.0
        } else {
            (self.s2 - self.s1 * self.s1 / self.n).max(0.0)
        }
    }
}

/// Sum of squared deviations of q over `indices`.
pub fn node_sse(data: &TrainingSet, indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let mean = indices.iter().map(|&i| data.q(i)).sum::<f64>() / indices.len() as f64;
    indices.iter().map(|&i| (data.q(i) - mean).powi(2)).sum()
}

/// Best `(feature, threshold)` over observed-value midpoints, ties broken by
/// lowest feature index then lowest threshold. `None` when no feature has two
/// distinct observed values among `indices`.
pub fn best_split(data: &TrainingSet, indices: &[usize]) -> Option<Split> {
    if indices.len() < 2 {
        return None;
    }
    // Centering on the node mean keeps the running sums well conditioned and
    // makes a constant-q node score exactly zero.
    let mean = indices.iter().map(|&i| data.q(i)).sum::<f64>() / indices.len() as f64;
    let mut best: Option<Split> = None;
    let mut observed: Vec<(f64, f64)> = Vec::with_capacity(indices.len());
    for feature in 0..data.n_features() {
        observed.clear();
        let mut missing = Moments::default();
        for &i in indices {
            let x = data.value(i, feature);
            let q = data.q(i) - mean;
            if x.is_nan() {
                missing.add(q);
            } else {
                observed.push((x, q));
            }
        }
        if observed.len() < 2 {
            continue;
        }
        observed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = Moments::default();
        for &(_, q) in &observed {
            total.add(q);
        }
        let mut left = Moments::default();
        for k in 0..observed.len() - 1 {
            left.add(observed[k].1);
            let (a, b) = (observed[k].0, observed[k + 1].0);
            if a == b {
                continue;
            }
            let right = total.minus(left);
            let objective = left.merged(missing).sse() + right.merged(missing).sse();
            let take = match best {
                None => true,
                Some(ref s) => improves(objective, s.objective),
            };
            if take {
                best = Some(Split {
                    feature,
                    threshold: midpoint(a, b),
                    objective,
                });
            }
        }
    }
    best
}

/// Midpoint of two distinct sorted values that still separates them.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}
