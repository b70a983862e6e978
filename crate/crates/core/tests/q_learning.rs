mod common;

use qpdf_traverse::dataset::{RewardWeights, TabularQ};
use qpdf_traverse::harness::models::q_learning_targets;
use qpdf_traverse::harness::pipeline::Corpus;
use qpdf_traverse::harness::Config;

#[test]
fn tabular_fitted_q_converges_to_value_iteration() {
    for (alpha, gamma) in [(0.5, 0.8), (1.0, 0.3), (0.2, 0.95)] {
        let err = common::toy_mdp_max_error(alpha, gamma);
        assert!(err < 1e-6, "alpha {alpha} gamma {gamma}: error {err:e}");
    }
}

#[test]
fn value_iteration_oracle_respects_the_reward_bound() {
    let w = RewardWeights::default();
    let q = common::toy_value_iteration(0.8, &w);
    let r_max = common::toy_trajectories()
        .iter()
        .flat_map(|t| t.transitions().iter().map(|tr| tr.reward(&w).abs()))
        .fold(0.0, f64::max);
    assert!(q.iter().flatten().all(|v| v.abs() <= r_max / (1.0 - 0.8) + 1e-12));
}

#[test]
fn corpus_targets_stay_within_the_discounted_reward_bound() {
    let cfg = Config {
        train_trajectories: 40,
        ..Config::default()
    };
    let corpus = Corpus::generate(&cfg).unwrap();
    let w = cfg.q.weights;
    let r_max = corpus
        .train
        .iter()
        .flat_map(|t| t.transitions().iter().map(|tr| tr.reward(&w).abs()))
        .fold(0.0, f64::max);
    let (targets, iterations) = q_learning_targets(&corpus.train, &cfg).unwrap();
    assert!(iterations >= 2);
    let bound = r_max / (1.0 - cfg.q.gamma);
    // single targets carry their own residual against the fitted value; the
    // per-cell mean is what the recurrence keeps inside the bound
    let table = TabularQ::fit(&targets);
    let worst = targets
        .iter()
        .map(|s| table.get(s.action, &s.state).unwrap().abs())
        .fold(0.0, f64::max);
    assert!(worst <= bound + 1e-9, "{worst} > {bound} (r_max {r_max}, gamma {})", cfg.q.gamma);
    assert_eq!(
        targets.len(),
        corpus.train.iter().map(|t| t.len()).sum::<usize>()
    );
}
