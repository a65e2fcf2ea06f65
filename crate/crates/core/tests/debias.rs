mod common;

use common::{random_instance, CensorLevel};
use fgray::debias::{nodewise, one_step, theta_hat, theta_hat_with, NodewisePenalty};
use fgray::{build_risk_grid, km_censoring, NodewiseOptions, PseudoLikelihood, XiMatrix};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn xi_for(seed: u64, n: usize, p: usize) -> (XiMatrix, Array2<f64>) {
    let d = random_instance(seed, n, p, CensorLevel::Moderate, false);
    let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
    let lik = PseudoLikelihood::new(&d, &grid).unwrap();
    let xi = lik.xi_matrix(Array1::zeros(p).view()).unwrap();
    let sigma = xi.sigma_hat();
    (xi, sigma)
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

#[test]
fn unpenalized_theta_is_the_inverse() {
    for seed in 0..5 {
        let (xi, sigma) = xi_for(seed, 60, 4);
        let theta = theta_hat(&xi, &[0.0; 4]).unwrap();
        let inv = to_na(&sigma).try_inverse().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let got = theta.matrix()[[i, j]];
                assert!((got - inv[(i, j)]).abs() < 1e-8 * inv[(i, j)].abs().max(1.0), "{got} vs {}", inv[(i, j)]);
            }
        }
    }
}

#[test]
fn tau_sq_reevaluated_from_rows() {
    let (xi, _) = xi_for(3, 50, 6);
    let rows = xi.rows();
    let n = rows.nrows() as f64;
    for j in 0..6 {
        let lambda = 0.05;
        let fit = nodewise(&xi, j, lambda).unwrap();
        let mut rss = 0.0;
        for i in 0..rows.nrows() {
            let mut r = rows[[i, j]];
            for k in (0..6).filter(|&k| k != j) {
                r -= rows[[i, k]] * fit.coefficients[k];
            }
            rss += r * r;
        }
        let l1: f64 = fit.coefficients.iter().map(|g| g.abs()).sum();
        let tau = rss / n + lambda * l1;
        assert!((fit.tau_sq - tau).abs() < 1e-10, "row {j}: {} vs {tau}", fit.tau_sq);
        assert_eq!(fit.coefficients[j], 0.0);
    }
}

#[test]
fn subset_rows_agree_with_full_theta() {
    let (xi, _) = xi_for(9, 60, 5);
    let opts = NodewiseOptions::default();
    let full = theta_hat_with(&xi, None, NodewisePenalty::Shared(0.02), &opts).unwrap();
    let part = theta_hat_with(&xi, Some(&[3, 1]), NodewisePenalty::Shared(0.02), &opts).unwrap();
    assert_eq!(part.rows(), &[3, 1]);
    for &j in &[3, 1] {
        let a = full.row(j).unwrap();
        let b = part.row(j).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn one_step_with_exact_inverse_is_a_newton_step() {
    let d = random_instance(21, 80, 3, CensorLevel::Moderate, false);
    let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
    let lik = PseudoLikelihood::new(&d, &grid).unwrap();
    let beta = Array1::from(vec![0.1, 0.2, -0.1]);
    let score = lik.score(beta.view()).unwrap();
    let h = lik.neg_hessian(beta.view()).unwrap();
    let hinv = to_na(&h).try_inverse().unwrap();
    let fits = (0..3)
        .map(|j| {
            let tau_sq = 1.0 / hinv[(j, j)];
            let coefficients = Array1::from_shape_fn(3, |k| if k == j { 0.0 } else { -hinv[(j, k)] * tau_sq });
            fgray::NodewiseFit {
                column: j,
                coefficients,
                tau_sq,
                lambda_j: 0.0,
                kkt_residual: 0.0,
                converged: true,
            }
        })
        .collect();
    let theta = fgray::ThetaHat::assemble(fits, &h).unwrap();
    let step = one_step(beta.view(), &theta, score.view()).unwrap();
    let s = nalgebra::DVector::from_fn(3, |i, _| score[i]);
    let newton = &hinv * s;
    for j in 0..3 {
        assert!((step.b[j] - (beta[j] + newton[j])).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theta_rows_satisfy_kkt(seed in 0u64..500, lambda in 0.005f64..0.2) {
        let (xi, sigma) = xi_for(seed, 40, 8);
        let opts = NodewiseOptions::default();
        let theta = theta_hat_with(&xi, None, NodewisePenalty::Shared(lambda), &opts).unwrap();
        let prod = theta.matrix().dot(&sigma);
        for (r, d) in theta.diagnostics.iter().enumerate() {
            prop_assert!((prod[[r, r]] - 1.0).abs() < 1e-8);
            for k in (0..8).filter(|&k| k != r) {
                prop_assert!(prod[[r, k]].abs() <= d.lambda_j / d.tau_sq + 1e-8);
            }
        }
    }
}
