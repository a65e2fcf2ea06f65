mod common;

use common::{random_instance, CensorLevel};
use fgray::solver::{fit_fine_gray_lasso, fit_linear_lasso, fit_path, lambda_max, lambda_path};
use fgray::{build_risk_grid, km_censoring, FitOptions, PseudoLikelihood};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

/// Exact lasso minimizer of `n⁻¹‖y − Xγ‖² + 2λ‖γ‖₁` by enumerating every
/// support and sign pattern and keeping the best stationary point.
fn lasso_by_enumeration(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> (Vec<f64>, f64) {
    let (n, p) = x.dim();
    let objective = |g: &[f64]| -> f64 {
        let mut rss = 0.0;
        for i in 0..n {
            let r = y[i] - (0..p).map(|j| x[[i, j]] * g[j]).sum::<f64>();
            rss += r * r;
        }
        rss / n as f64 + 2.0 * lambda * g.iter().map(|v| v.abs()).sum::<f64>()
    };
    let zero = vec![0.0; p];
    let mut best = (zero.clone(), objective(&zero));
    for mask in 1u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let s = support.len();
        for signs in 0u32..(1 << s) {
            let sgn: Vec<f64> = (0..s).map(|k| if signs & (1 << k) != 0 { 1.0 } else { -1.0 }).collect();
            let g = DMatrix::from_fn(s, s, |a, b| {
                (0..n).map(|i| x[[i, support[a]]] * x[[i, support[b]]]).sum::<f64>() / n as f64
            });
            let c = DVector::from_fn(s, |a, _| {
                (0..n).map(|i| x[[i, support[a]]] * y[i]).sum::<f64>() / n as f64 - lambda * sgn[a]
            });
            let Some(sol) = g.lu().solve(&c) else { continue };
            if (0..s).any(|a| sol[a] * sgn[a] <= 0.0) {
                continue;
            }
            let mut cand = zero.clone();
            for (a, &j) in support.iter().enumerate() {
                cand[j] = sol[a];
            }
            let obj = objective(&cand);
            if obj < best.1 {
                best = (cand, obj);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_lasso_matches_enumeration(
        xs in proptest::collection::vec(-2.0f64..2.0, 20 * 4),
        ys in proptest::collection::vec(-2.0f64..2.0, 20),
        lambda in 0.01f64..0.5,
    ) {
        let x = Array2::from_shape_vec((20, 4), xs).unwrap();
        let y = Array1::from(ys);
        let opts = FitOptions { inner_tol: 1e-13, kkt_tol: 1e-11, ..FitOptions::default() };
        let fit = fit_linear_lasso(x.view(), y.view(), lambda, &opts).unwrap();
        let (want, _) = lasso_by_enumeration(&x, &y, lambda);
        for j in 0..4 {
            prop_assert!((fit.beta[j] - want[j]).abs() < 1e-7, "coef {}: {} vs {}", j, fit.beta[j], want[j]);
        }
    }
}

#[test]
fn warm_path_matches_cold_fits() {
    let d = random_instance(4, 60, 12, CensorLevel::Moderate, false);
    let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
    let lik = PseudoLikelihood::new(&d, &grid).unwrap();
    let opts = FitOptions::default();
    let path = lambda_path(&lik, 15, 0.05).unwrap();
    let warm = fit_path(&lik, &path, &opts).unwrap();
    for fit in &warm {
        let cold = fit_fine_gray_lasso(&lik, fit.lambda, None, &opts).unwrap();
        assert!(fit.converged && cold.converged);
        let gap = (fit.objective - cold.objective).abs();
        assert!(gap < 1e-9 * cold.objective.abs().max(1.0), "lambda {}: {gap}", fit.lambda);
        for (a, b) in fit.beta.iter().zip(&cold.beta) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn lambda_max_gives_the_zero_fit() {
    let d = random_instance(8, 50, 6, CensorLevel::Heavy, false);
    let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
    let lik = PseudoLikelihood::new(&d, &grid).unwrap();
    let lmax = lambda_max(&lik).unwrap();
    let score = lik.score(Array1::zeros(6).view()).unwrap();
    assert!((lmax - score.iter().fold(0.0f64, |m, s| m.max(s.abs()))).abs() < 1e-15);
    let at = fit_fine_gray_lasso(&lik, lmax * 1.0001, None, &FitOptions::default()).unwrap();
    assert!(at.beta.iter().all(|&b| b == 0.0));
    let below = fit_fine_gray_lasso(&lik, lmax * 0.9, None, &FitOptions::default()).unwrap();
    assert!(below.beta.iter().any(|&b| b != 0.0));
}

#[test]
fn penalized_fit_satisfies_subgradient_conditions() {
    let d = random_instance(12, 80, 10, CensorLevel::Moderate, true);
    let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
    let lik = PseudoLikelihood::new(&d, &grid).unwrap();
    let lambda = 0.3 * lambda_max(&lik).unwrap();
    let fit = fit_fine_gray_lasso(&lik, lambda, None, &FitOptions::default()).unwrap();
    let score = lik.score(fit.beta.view()).unwrap();
    for (b, s) in fit.beta.iter().zip(&score) {
        if *b != 0.0 {
            assert!((s - lambda * b.signum()).abs() < 1e-6);
        } else {
            assert!(s.abs() <= lambda + 1e-6);
        }
    }
}
