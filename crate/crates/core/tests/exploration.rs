mod common;

use std::collections::HashSet;

use qpdf_traverse::forest::ForestParams;
use qpdf_traverse::tte::{
    explore_until_safe, full_reveal_order, train_rl_strategy, Outcome, RandomStrategy, RlParams, RlStrategy, Strategy,
};

fn rl_params(rollouts: usize) -> RlParams {
    RlParams {
        rollouts_per_episode: rollouts,
        forest: ForestParams {
            n_trees: 8,
            ..ForestParams::default()
        },
        ..RlParams::default()
    }
}

#[test]
fn random_strategy_is_uniform() {
    let mut rng = common::rng(20);
    let (state, _) = common::random_occluded_state(&mut rng, 4);
    let mut counts = [0usize; 4];
    let n = 10_000;
    for s in 0..n {
        counts[RandomStrategy { seed: s as u64 }.select(&state, 0).unwrap()] += 1;
    }
    let expected = n as f64 / 4.0;
    let sigma = (n as f64 * 0.25 * 0.75).sqrt();
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    for c in counts {
        assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
    }
    // 99.9 % quantile of chi-square with 3 degrees of freedom
    assert!(chi2 < 16.27, "chi-square {chi2}");
}

#[test]
fn learned_strategy_finds_the_planted_bin() {
    let key = 4;
    let model = common::PlantedModel { key };
    let mut rng = common::rng(21);
    let train: Vec<_> = (0..40).map(|_| common::random_occluded_state(&mut rng, 6)).collect();
    let report = train_rl_strategy(&train, &model, &rl_params(400), 9).unwrap();
    assert_eq!(report.episodes.len(), 5);
    let held_out: Vec<_> = (0..50).map(|_| common::random_occluded_state(&mut rng, 6)).collect();
    let hits = held_out
        .iter()
        .filter(|(s, _)| RlStrategy { forest: &report.forest }.select(s, 0).unwrap() == key)
        .count();
    assert!(hits as f64 >= 0.9 * held_out.len() as f64, "{hits} of {}", held_out.len());
}

#[test]
fn later_episodes_mix_learned_and_random_decisions_evenly() {
    let model = common::PlantedModel { key: 5 };
    let mut rng = common::rng(22);
    let train: Vec<_> = (0..40).map(|_| common::random_occluded_state(&mut rng, 6)).collect();
    let report = train_rl_strategy(&train, &model, &rl_params(1500), 10).unwrap();
    assert_eq!(report.episodes[0].learned, 0);
    let learned: usize = report.episodes[1..].iter().map(|e| e.learned).sum();
    let random: usize = report.episodes[1..].iter().map(|e| e.random).sum();
    let n = (learned + random) as f64;
    assert!(n >= 1e4, "only {n} decisions");
    let share = learned as f64 / n;
    assert!((share - 0.5).abs() < 3.0 * (0.25 / n).sqrt(), "learned share {share}");
}

#[test]
fn learned_choice_is_the_exhaustive_argmax() {
    let model = common::PlantedModel { key: 2 };
    let mut rng = common::rng(23);
    let train: Vec<_> = (0..20).map(|_| common::random_occluded_state(&mut rng, 6)).collect();
    let report = train_rl_strategy(&train, &model, &rl_params(100), 11).unwrap();
    for _ in 0..30 {
        let extra = rng_bins(&mut rng);
        let (s, _) = common::random_occluded_state(&mut rng, 1 + extra);
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for &b in s.missing_bins() {
            let v = report.forest.value(&s, b);
            if v > best.1 {
                best = (b, v);
            }
        }
        assert_eq!(RlStrategy { forest: &report.forest }.select(&s, 0).unwrap(), best.0);
    }
}

fn rng_bins(rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    use rand::Rng;
    rng.random_range(0..11)
}

#[test]
fn traces_never_reprobe_and_end_safe_or_exhausted() {
    let model = common::PlantedModel { key: 3 };
    let mut rng = common::rng(24);
    for i in 0..50 {
        let (s, truth) = common::random_occluded_state(&mut rng, 8);
        let mut strategy = RandomStrategy { seed: i };
        let trace = explore_until_safe(&s, &truth, &mut strategy, &model, 0.8, None).unwrap();
        let bins = trace.probed_bins();
        assert_eq!(bins.iter().collect::<HashSet<_>>().len(), bins.len());
        assert!(bins.len() <= s.missing_bins().len());
        assert_eq!(trace.outcome, Outcome::SafeFound { config: qpdf_traverse::FlipperConfig::I_SHAPE, probes: bins.len() });
        assert_eq!(*bins.last().unwrap(), 3);

        let order = full_reveal_order(&s, &truth, &mut RandomStrategy { seed: i }).unwrap();
        assert_eq!(order[..bins.len()], bins[..]);
        assert_eq!(order.len(), s.missing_bins().len());
    }
}
