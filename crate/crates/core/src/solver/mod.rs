//! L1-penalized solvers: the Fine-Gray LASSO, penalized least squares for the
//! nodewise regressions, λ paths and cross-validation.

mod cv;
mod fine_gray;
mod linear;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, fold_assignment, CvResult};
pub use fine_gray::{fit_fine_gray_lasso, fit_path, lambda_max, lambda_path, QuadraticModel};
pub use linear::{fit_linear_lasso, GramLasso};
pub(crate) use fine_gray::log_grid;

/// Stopping rules shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Outer (quadratic approximation) iterations for the Fine-Gray fit.
    pub max_outer: usize,
    /// Coordinate sweeps allowed per inner solve.
    pub max_inner: usize,
    /// Largest coordinate change that ends an inner solve.
    pub inner_tol: f64,
    /// KKT residual that certifies convergence.
    pub kkt_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_outer: 100,
            max_inner: 100_000,
            inner_tol: 1e-9,
            kkt_tol: 1e-6,
        }
    }
}

/// Result of a penalized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedFit {
    pub beta: Array1<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

impl PenalizedFit {
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Largest violation of the subgradient conditions of
/// `loss(β) + λ‖β‖₁` given the loss gradient `grad`.
pub fn kkt_residual(grad: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, lambda: f64) -> f64 {
    grad.iter()
        .zip(beta)
        .map(|(&g, &b)| {
            if b != 0.0 {
                (g + lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[inline]
pub(crate) fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

pub(crate) fn l1_norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}
