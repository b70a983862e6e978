//! Regression forests whose leaves hold q histograms.
//!
//! One [`TreeEnsemble`] is trained per flipper configuration. Prediction on a
//! partially observed state descends into both children at every node whose
//! feature is missing and mixes the reached leaves by their training priors.

mod histogram;
pub mod io;
mod split;
mod tree;

use rand::Rng;

pub use histogram::{BinLayout, QHistogram};
pub use split::{best_split, improves, midpoint, node_sse, Split, TrainingSet, TIE_TOLERANCE};
pub use tree::{train_tree, Leaf, Stopping, TreeNode};

use crate::dem::StateVector;
use crate::error::{Error, Result};
use crate::flipper::FlipperConfig;
use crate::policy::QpdfSummary;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub stopping: Stopping,
    pub bins: usize,
    /// Fraction of the q span added on each side of the bin layout.
    pub pad: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 32,
            stopping: Stopping::default(),
            bins: 40,
            pad: 0.05,
        }
    }
}

/// Trees sharing one q-bin layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeEnsemble {
    layout: BinLayout,
    trees: Vec<TreeNode>,
}

impl TreeEnsemble {
    pub fn new(layout: BinLayout, trees: Vec<TreeNode>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Parameter("an ensemble needs at least one tree".into()));
        }
        for leaf in trees.iter().flat_map(|t| t.leaves()) {
            if leaf.histogram().edges() != layout.edges() {
                return Err(Error::Parameter("leaf histogram does not match layout".into()));
            }
        }
        Ok(TreeEnsemble { layout, trees })
    }

    /// Trains `n_trees` trees, each on a bootstrap resample drawn from the
    /// stream `(seed, tree index)`.
    pub fn train(data: &TrainingSet, layout: BinLayout, params: &ForestParams, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Parameter("empty training set".into()));
        }
        let m = data.len();
        let mut trees = Vec::with_capacity(params.n_trees);
        for t in 0..params.n_trees {
            let mut rng = seed::rng(seed, &[t as u64]);
            let sample: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            trees.push(train_tree(data, &sample, &layout, params.stopping)?);
        }
        TreeEnsemble::new(layout, trees)
    }

    pub fn layout(&self) -> &BinLayout {
        &self.layout
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    /// Multiple-leaves prediction: each tree contributes the prior-weighted
    /// mixture of its reached leaves, trees weigh equally.
    pub fn predict(&self, x: &[f64]) -> QHistogram {
        let mut mass = vec![0.0; self.layout.bins()];
        let per_tree = 1.0 / self.trees.len() as f64;
        for tree in &self.trees {
            for (leaf, w) in tree.leaf_weights(x) {
                for (m, lm) in mass.iter_mut().zip(leaf.histogram().mass()) {
                    *m += per_tree * w * lm;
                }
            }
        }
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        QHistogram::from_parts_unchecked(self.layout.edges().to_vec(), mass)
    }

    /// Mean and safety of [`TreeEnsemble::predict`] without building the
    /// histogram; both are linear in the leaf mixture.
    pub fn summary(&self, x: &[f64]) -> QpdfSummary {
        let mut mean = 0.0;
        let mut safety = 0.0;
        let per_tree = 1.0 / self.trees.len() as f64;
        for tree in &self.trees {
            for (leaf, w) in tree.leaf_weights(x) {
                mean += per_tree * w * leaf.mean();
                safety += per_tree * w * leaf.safety();
            }
        }
        QpdfSummary {
            expected_q: mean,
            safety: safety.clamp(0.0, 1.0),
        }
    }

    /// Number of distinct leaves reached across all trees.
    pub fn reached_leaf_count(&self, x: &[f64]) -> usize {
        let mut out = Vec::new();
        for tree in &self.trees {
            tree.reached_leaves(x, &mut out);
        }
        out.len()
    }
}

/// One ensemble per flipper configuration, all sharing a bin layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    params: ForestParams,
    models: Vec<TreeEnsemble>,
}

impl Forest {
    pub fn new(params: ForestParams, models: Vec<TreeEnsemble>) -> Result<Self> {
        if models.len() != FlipperConfig::COUNT {
            return Err(Error::Parameter(format!(
                "forest needs {} models, got {}",
                FlipperConfig::COUNT,
                models.len()
            )));
        }
        if models.iter().any(|m| m.layout != models[0].layout) {
            return Err(Error::Parameter("models must share the q-bin layout".into()));
        }
        Ok(Forest { params, models })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn layout(&self) -> &BinLayout {
        &self.models[0].layout
    }

    pub fn model(&self, c: FlipperConfig) -> &TreeEnsemble {
        &self.models[c.index()]
    }

    pub fn models(&self) -> &[TreeEnsemble] {
        &self.models
    }

    pub fn predict_qpdf(&self, c: FlipperConfig, x: &StateVector) -> QHistogram {
        self.model(c).predict(x.values())
    }

    pub fn summary(&self, c: FlipperConfig, x: &StateVector) -> QpdfSummary {
        self.model(c).summary(x.values())
    }

    /// Expected q of every configuration for `x`.
    pub fn expected_q(&self, x: &StateVector) -> [f64; FlipperConfig::COUNT] {
        let mut out = [0.0; FlipperConfig::COUNT];
        for c in FlipperConfig::ALL {
            out[c.index()] = self.summary(c, x).expected_q;
        }
        out
    }
}

/// Trains one ensemble per configuration. `data[c.index()]` holds the
/// samples of configuration `c`; the shared layout covers every q target.
pub fn train_forest(data: &[TrainingSet], params: &ForestParams, seed: u64) -> Result<Forest> {
    if data.len() != FlipperConfig::COUNT {
        return Err(Error::Parameter(format!(
            "expected {} per-configuration training sets",
            FlipperConfig::COUNT
        )));
    }
    for c in FlipperConfig::ALL {
        if data[c.index()].is_empty() {
            return Err(Error::MissingConfiguration(c));
        }
    }
    let pooled: Vec<f64> = data.iter().flat_map(|d| d.targets().iter().copied()).collect();
    let layout = BinLayout::covering(&pooled, params.bins, params.pad)?;
    let models = FlipperConfig::ALL
        .iter()
        .map(|c| TreeEnsemble::train(&data[c.index()], layout.clone(), params, seed::derive(seed, &[c.id() as u64])))
        .collect::<Result<Vec<_>>>()?;
    Forest::new(*params, models)
}
