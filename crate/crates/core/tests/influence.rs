mod common;

use common::{random_instance, CensorLevel};
use fgray::inference::influence;
use fgray::{build_risk_grid, km_censoring, PseudoLikelihood};
use ndarray::{Array1, Axis};

#[test]
fn influence_matches_naive_integrals() {
    let levels = [CensorLevel::None, CensorLevel::Moderate, CensorLevel::Heavy];
    for seed in 0..15u64 {
        let d = random_instance(seed, 30, 3, levels[seed as usize % 3], seed % 2 == 0);
        let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
        let lik = PseudoLikelihood::new(&d, &grid).unwrap();
        let beta = [0.2, -0.4, 0.3];
        let infl = influence(&lik, Array1::from(beta.to_vec()).view()).unwrap();
        let (eta, psi) = common::influence(&d, &beta);
        assert!(common::max_abs_diff(&infl.eta, &eta) < 1e-12, "eta, seed {seed}");
        assert!(common::max_abs_diff(&infl.psi, &psi) < 1e-12, "psi, seed {seed}");
    }
}

#[test]
fn psi_vanishes_without_censoring() {
    for seed in 0..5 {
        let d = random_instance(seed, 40, 4, CensorLevel::None, true);
        let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
        let lik = PseudoLikelihood::new(&d, &grid).unwrap();
        let infl = influence(&lik, Array1::from_elem(4, 0.1).view()).unwrap();
        assert!(infl.psi.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn eta_averages_to_score() {
    let d = random_instance(11, 45, 5, CensorLevel::Heavy, false);
    let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
    let lik = PseudoLikelihood::new(&d, &grid).unwrap();
    let beta = Array1::from(vec![0.5, 0.0, -0.5, 0.2, 0.1]);
    let infl = influence(&lik, beta.view()).unwrap();
    let mean = infl.eta.mean_axis(Axis(0)).unwrap();
    let score = lik.score(beta.view()).unwrap();
    assert!(mean.iter().zip(&score).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn quadratic_form_matches_meat() {
    let d = random_instance(5, 40, 3, CensorLevel::Moderate, false);
    let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
    let lik = PseudoLikelihood::new(&d, &grid).unwrap();
    let infl = influence(&lik, Array1::zeros(3).view()).unwrap();
    let v = Array1::from(vec![1.0, -2.0, 0.5]);
    let direct = v.dot(&infl.meat().dot(&v));
    assert!((infl.quadratic_form(v.view()) - direct).abs() < 1e-12 * direct.abs().max(1.0));
}
