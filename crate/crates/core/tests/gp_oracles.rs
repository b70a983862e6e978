mod common;

use qpdf_traverse::dem::{DemGeometry, StateVector};
use qpdf_traverse::gp::{gibbs_marginalize, DemPrior, DemSlot, GibbsParams, GpModel, KernelKind, KernelParams};

#[test]
fn lml_gradient_matches_central_differences() {
    let worst = common::worst_lml_gradient_error(50, 10);
    assert!(worst < 1e-5, "relative error {worst:e}");
}

#[test]
fn zero_input_covariance_reduces_to_point_prediction() {
    let worst = common::zero_cov_max_error(50, 11);
    assert!(worst < 1e-9, "deviation {worst:e}");
}

#[test]
fn moment_matching_agrees_with_monte_carlo() {
    assert_eq!(common::moment_matching_failures(20, 100_000, 12), 0);
}

/// With one missing bin the chain draws independent samples from the
/// bin's Gaussian conditional, so the collapsed prediction must match the
/// integral of the point prediction against that conditional.
#[test]
fn gibbs_single_bin_matches_quadrature() {
    let g = DemGeometry {
        vertical_resolution: 0.0,
        ..DemGeometry::new(2, 2)
    };
    let slot = DemSlot { offset: 1, geometry: g };
    let inputs = vec![
        vec![0.0, 0.0, 0.1, 0.0, 0.2],
        vec![1.0, 0.3, 0.0, 0.1, 0.0],
        vec![0.5, 0.2, 0.2, 0.2, 0.2],
        vec![0.2, -0.1, 0.0, 0.3, 0.1],
        vec![0.7, 0.4, 0.1, -0.2, 0.3],
    ];
    let targets = vec![1.0, -1.0, 0.5, 0.0, 0.8];
    let model = GpModel::new(
        inputs,
        targets,
        KernelParams::new(KernelKind::Se, 1.0, vec![1.0, 0.3, 0.4, 0.5, 0.35], 0.01),
    )
    .unwrap();
    let prior = DemPrior::new(40.0, 1.0).unwrap();
    // bin 0 missing; its 4-neighbors are bins 1 and 2
    let x = StateVector::from_values(vec![0.3, f64::NAN, 0.1, 0.25, 0.0]);
    let (mu, var) = prior.conditional(&[0.1, 0.25]);
    let sd = var.sqrt();

    // trapezoid over +-8 standard deviations
    let steps = 4000;
    let (mut m1, mut m2, mut pv) = (0.0, 0.0, 0.0);
    let mut norm = 0.0;
    for k in 0..=steps {
        let z = -8.0 + 16.0 * k as f64 / steps as f64;
        let w = (-0.5 * z * z).exp() * if k == 0 || k == steps { 0.5 } else { 1.0 };
        let p = model.predict(&[0.3, mu + sd * z, 0.1, 0.25, 0.0]);
        m1 += w * p.mean;
        m2 += w * p.mean * p.mean;
        pv += w * p.variance;
        norm += w;
    }
    let (m1, m2, pv) = (m1 / norm, m2 / norm, pv / norm);
    let exact_var = pv + m2 - m1 * m1;

    let n = 20_000;
    let params = GibbsParams { n_samples: n, burn_in: 10 };
    let got = gibbs_marginalize(&model, &x, slot, &prior, &params, 5).unwrap();
    let se = ((m2 - m1 * m1) / n as f64).sqrt();
    assert!((got.mean - m1).abs() < 4.0 * se, "mean {} vs {m1} (se {se:e})", got.mean);
    assert!((got.variance - exact_var).abs() < 0.05 * exact_var, "variance {} vs {exact_var}", got.variance);
}
