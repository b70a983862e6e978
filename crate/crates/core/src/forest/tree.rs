use crate::error::Result;
use crate::forest::histogram::{BinLayout, QHistogram};
use crate::forest::split::{best_split, node_sse, TrainingSet};

/// Terminal node: a q histogram and the fraction of training weight that
/// reached it.
#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    histogram: QHistogram,
    prior: f64,
    mean: f64,
    safety: f64,
}

impl Leaf {
    pub fn new(histogram: QHistogram, prior: f64) -> Self {
        let mean = histogram.mean();
        let safety = histogram.mass_above_zero();
        Leaf {
            histogram,
            prior,
            mean,
            safety,
        }
    }

    pub fn histogram(&self) -> &QHistogram {
        &self.histogram
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn safety(&self) -> f64 {
        self.safety
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(Leaf),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stopping {
    /// Nodes holding this many samples or fewer become leaves.
    pub min_samples: usize,
    pub max_depth: usize,
}

impl Default for Stopping {
    fn default() -> Self {
        Stopping {
            min_samples: 5,
            max_depth: 12,
        }
    }
}

impl TreeNode {
    pub fn leaf(histogram: QHistogram, prior: f64) -> Self {
        TreeNode::Leaf(Leaf::new(histogram, prior))
    }

    pub fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match self {
            TreeNode::Leaf(l) => out.push(l),
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Leaves reached by `x`, descending into both children wherever the
    /// tested feature is missing (`NaN`).
    pub fn reached_leaves<'a>(&'a self, x: &[f64], out: &mut Vec<&'a Leaf>) {
        match self {
            TreeNode::Leaf(l) => out.push(l),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let v = x[*feature];
                if v.is_nan() {
                    left.reached_leaves(x, out);
                    right.reached_leaves(x, out);
                } else if v <= *threshold {
                    left.reached_leaves(x, out);
                } else {
                    right.reached_leaves(x, out);
                }
            }
        }
    }

    /// Reached leaves with their priors renormalized to sum to one.
    pub fn leaf_weights<'a>(&'a self, x: &[f64]) -> Vec<(&'a Leaf, f64)> {
        let mut reached = Vec::new();
        self.reached_leaves(x, &mut reached);
        let total: f64 = reached.iter().map(|l| l.prior).sum();
        let n = reached.len() as f64;
        reached
            .into_iter()
            .map(|l| {
                // all-zero priors can only come from hand-built trees
                let w = if total > 0.0 { l.prior / total } else { 1.0 / n };
                (l, w)
            })
            .collect()
    }
}

/// Greedy recursive tree induction over `samples` (indices into `data`,
/// duplicates allowed). Each sample enters with weight one; a sample missing
/// the split feature goes both ways with half its weight. Leaf priors are
/// the weight reaching each leaf over the total.
pub fn train_tree(
    data: &TrainingSet,
    samples: &[usize],
    layout: &BinLayout,
    stopping: Stopping,
) -> Result<TreeNode> {
    let entries: Vec<(usize, f64)> = samples.iter().map(|&i| (i, 1.0)).collect();
    let total = entries.len() as f64;
    build(data, entries, layout, stopping, 0, total)
}

fn build(
    data: &TrainingSet,
    entries: Vec<(usize, f64)>,
    layout: &BinLayout,
    stopping: Stopping,
    depth: usize,
    total: f64,
) -> Result<TreeNode> {
    let indices: Vec<usize> = entries.iter().map(|e| e.0).collect();
    let terminal = entries.len() <= stopping.min_samples
        || depth >= stopping.max_depth
        || node_sse(data, &indices) == 0.0;
    let split = if terminal {
        None
    } else {
        best_split(data, &indices)
    };
    let Some(split) = split else {
        return make_leaf(data, &entries, layout, total);
    };
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &(i, w) in &entries {
        let v = data.value(i, split.feature);
        if v.is_nan() {
            left.push((i, w / 2.0));
            right.push((i, w / 2.0));
        } else if v <= split.threshold {
            left.push((i, w));
        } else {
            right.push((i, w));
        }
    }
    drop(entries);
    Ok(TreeNode::split(
        split.feature,
        split.threshold,
        build(data, left, layout, stopping, depth + 1, total)?,
        build(data, right, layout, stopping, depth + 1, total)?,
    ))
}

fn make_leaf(
    data: &TrainingSet,
    entries: &[(usize, f64)],
    layout: &BinLayout,
    total: f64,
) -> Result<TreeNode> {
    let weight: f64 = entries.iter().map(|e| e.1).sum();
    let histogram = QHistogram::from_weighted(layout, entries.iter().map(|&(i, w)| (data.q(i), w)))?;
    Ok(TreeNode::leaf(histogram, weight / total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> TrainingSet {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let q: Vec<f64> = (0..20).map(|i| if i < 10 { -2.0 } else { 3.0 }).collect();
        TrainingSet::from_rows(&rows, &q).unwrap()
    }

    #[test]
    fn stump_when_min_samples_covers_data() {
        let d = data();
        let layout = BinLayout::covering(d.targets(), 10, 0.05).unwrap();
        let idx: Vec<usize> = (0..20).collect();
        let tree = train_tree(&d, &idx, &layout, Stopping { min_samples: 20, max_depth: 12 }).unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 1);
        let expected = QHistogram::from_weighted(&layout, d.targets().iter().map(|&q| (q, 1.0))).unwrap();
        assert_eq!(leaves[0].histogram(), &expected);
        assert_eq!(leaves[0].prior(), 1.0);
    }

    #[test]
    fn full_data_lands_in_one_leaf_each() {
        let d = data();
        let layout = BinLayout::covering(d.targets(), 10, 0.05).unwrap();
        let idx: Vec<usize> = (0..20).collect();
        let tree = train_tree(&d, &idx, &layout, Stopping::default()).unwrap();
        let priors: f64 = tree.leaves().iter().map(|l| l.prior()).sum();
        assert!((priors - 1.0).abs() < 1e-12);
        for i in 0..20 {
            let mut reached = Vec::new();
            tree.reached_leaves(d.row(i), &mut reached);
            assert_eq!(reached.len(), 1);
        }
        // the separating split makes both leaves pure
        assert_eq!(tree.leaves().len(), 2);
    }

    #[test]
    fn both_way_samples_split_their_weight() {
        let rows = vec![vec![0.0], vec![1.0], vec![f64::NAN], vec![3.0]];
        let d = TrainingSet::from_rows(&rows, &[0.0, 0.0, 5.0, 10.0]).unwrap();
        let layout = BinLayout::covering(d.targets(), 4, 0.05).unwrap();
        let tree = train_tree(&d, &[0, 1, 2, 3], &layout, Stopping { min_samples: 2, max_depth: 1 }).unwrap();
        let priors: Vec<f64> = tree.leaves().iter().map(|l| l.prior()).collect();
        assert!((priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(priors.iter().all(|&p| p > 0.0));
        let halves = priors.iter().filter(|&&p| (p * 8.0).fract() == 0.0).count();
        assert_eq!(halves, priors.len());
    }
}
