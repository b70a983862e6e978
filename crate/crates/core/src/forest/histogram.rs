use crate::error::{Error, Result};

/// Uniform q-value bin edges shared by every tree of a forest.
#[derive(Clone, Debug, PartialEq)]
pub struct BinLayout {
    edges: Vec<f64>,
}

impl BinLayout {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Parameter(format!(
                "bad bin layout [{lo}, {hi}] with {bins} bins"
            )));
        }
        let w = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + w * i as f64).collect();
        edges.push(hi);
        Ok(BinLayout { edges })
    }

    /// `bins` uniform bins over `[min q, max q]`, padded by `pad` of the span
    /// on each side. A zero span is widened to one unit around the value.
    pub fn covering(q: &[f64], bins: usize, pad: f64) -> Result<Self> {
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Parameter("no finite q values for bin layout".into()));
        }
        let span = hi - lo;
        let margin = if span > 0.0 { span * pad } else { 0.5 };
        BinLayout::uniform(lo - margin, hi + margin, bins)
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter("bin edges must be strictly ascending".into()));
        }
        Ok(BinLayout { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    /// Bin holding `q`; values outside the layout clamp to the end bins.
    pub fn bin_of(&self, q: f64) -> usize {
        let last = self.bins() - 1;
        if q <= self.edges[0] {
            return 0;
        }
        if q >= self.edges[last + 1] {
            return last;
        }
        // first edge strictly greater than q, minus one
        self.edges.partition_point(|&e| e <= q).saturating_sub(1).min(last)
    }
}

/// Discretized probability density over q values.
#[derive(Clone, Debug, PartialEq)]
pub struct QHistogram {
    edges: Vec<f64>,
    mass: Vec<f64>,
}

impl QHistogram {
    /// Validates shape and normalizes `mass` to sum to one.
    pub fn new(edges: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        let layout = BinLayout::from_edges(edges)?;
        if mass.len() != layout.bins() {
            return Err(Error::Parameter("mass length must equal bin count".into()));
        }
        if mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Parameter("histogram mass must be nonnegative".into()));
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(Error::Parameter("histogram has no mass".into()));
        }
        Ok(QHistogram {
            edges: layout.edges,
            mass: mass.into_iter().map(|m| m / total).collect(),
        })
    }

    /// Weighted histogram of `(q, weight)` pairs over `layout`.
    pub fn from_weighted(layout: &BinLayout, samples: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut mass = vec![0.0; layout.bins()];
        for (q, w) in samples {
            mass[layout.bin_of(q)] += w;
        }
        QHistogram::new(layout.edges.clone(), mass)
    }

    pub(crate) fn from_parts_unchecked(edges: Vec<f64>, mass: Vec<f64>) -> Self {
        QHistogram { edges, mass }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    /// Sum of bin center times mass.
    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, m)| self.center(i) * m)
            .sum()
    }

    /// Mass at q >= 0; the bin straddling zero contributes the fraction of its
    /// width lying above zero.
    pub fn mass_above_zero(&self) -> f64 {
        let mut s = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            let (lo, hi) = (self.edges[i], self.edges[i + 1]);
            if lo >= 0.0 {
                s += m;
            } else if hi > 0.0 {
                s += m * hi / (hi - lo);
            }
        }
        s.clamp(0.0, 1.0)
    }
}
