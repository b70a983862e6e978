mod common;

use rand::Rng;

use qpdf_traverse::forest::{train_tree, BinLayout, Stopping, TrainingSet, TreeEnsemble};

#[test]
fn marginal_prediction_equals_path_enumeration() {
    let worst = common::forest_oracle_max_error(200, 5, 1);
    assert!(worst < 1e-9, "largest per-bin deviation {worst:e}");
}

#[test]
fn split_search_equals_exhaustive_enumeration() {
    assert_eq!(common::split_oracle_mismatches(500, 2), 0);
}

#[test]
fn exhaustive_oracle_agrees_on_a_hand_checked_set() {
    // q = {0, 0, 10, 10} is separated perfectly by feature 1 only
    let set = TrainingSet::from_rows(
        &[vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 5.0], vec![1.0, 5.0]],
        &[0.0, 0.0, 10.0, 10.0],
    )
    .unwrap();
    assert_eq!(common::exhaustive_split(&set), Some((1, 3.0, 0.0)));
}

#[test]
fn revealing_a_feature_never_adds_reached_leaves() {
    let mut rng = common::rng(3);
    let layout = BinLayout::uniform(-1.0, 1.0, 6).unwrap();
    for _ in 0..100 {
        let tree = common::random_tree(&mut rng, 4, 5, &layout);
        let ensemble = TreeEnsemble::new(layout.clone(), vec![tree]).unwrap();
        let full: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = vec![f64::NAN; 5];
        let mut reached = ensemble.reached_leaf_count(&x);
        for f in 0..5 {
            x[f] = full[f];
            let now = ensemble.reached_leaf_count(&x);
            assert!(now <= reached);
            reached = now;
        }
        assert_eq!(reached, 1);
    }
}

#[test]
fn an_always_missing_feature_is_never_chosen() {
    let mut rng = common::rng(4);
    let layout = BinLayout::uniform(-1.0, 7.0, 8).unwrap();
    for _ in 0..20 {
        let mut set = TrainingSet::new(3);
        for _ in 0..40 {
            let a = rng.random_range(0..4) as f64;
            let b = rng.random_range(0..4) as f64;
            set.push(&[a, f64::NAN, b], a + 0.5 * b).unwrap();
        }
        let idx: Vec<usize> = (0..set.len()).collect();
        let tree = train_tree(&set, &idx, &layout, Stopping { min_samples: 2, max_depth: 6 }).unwrap();
        let mut stack = vec![&tree];
        while let Some(node) = stack.pop() {
            if let qpdf_traverse::forest::TreeNode::Split { feature, left, right, .. } = node {
                assert_ne!(*feature, 1);
                stack.push(left);
                stack.push(right);
            }
        }
    }
}
