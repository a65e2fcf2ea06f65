use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{kkt_residual, l1_norm, soft_threshold, FitOptions, PenalizedFit};
use crate::error::{FgError, Result};

/// Penalized least squares in covariance form:
///
/// `yy - 2 cᵀγ + γᵀ G γ + 2λ‖γ‖₁`,
///
/// i.e. `n⁻¹‖y - Xγ‖² + 2λ‖γ‖₁` with `G = XᵀX/n`, `c = Xᵀy/n`,
/// `yy = yᵀy/n`. An `excluded` coordinate is held at zero, which lets the
/// nodewise regressions reuse one Gram matrix for every column.
#[derive(Debug, Clone, Copy)]
pub struct GramLasso<'a> {
    pub gram: ArrayView2<'a, f64>,
    pub target: ArrayView1<'a, f64>,
    pub yy: f64,
    pub excluded: Option<usize>,
}

impl<'a> GramLasso<'a> {
    pub fn new(gram: ArrayView2<'a, f64>, target: ArrayView1<'a, f64>, yy: f64) -> Self {
        GramLasso {
            gram,
            target,
            yy,
            excluded: None,
        }
    }

    pub fn excluding(mut self, j: usize) -> Self {
        self.excluded = Some(j);
        self
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// Least-squares loss `yy - 2cᵀγ + γᵀGγ` (without the penalty).
    pub fn loss(&self, gamma: ArrayView1<'_, f64>) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (k, &gk) in gamma.iter().enumerate() {
            if gk == 0.0 {
                continue;
            }
            lin += self.target[k] * gk;
            let row = self.gram.row(k);
            for (l, &gl) in gamma.iter().enumerate() {
                if gl != 0.0 {
                    quad += gk * row[l] * gl;
                }
            }
        }
        self.yy - 2.0 * lin + quad
    }

    /// `c - Gγ` over the free coordinates, zero at the excluded one.
    pub fn residual_correlation(&self, gamma: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut rho = self.target.to_owned();
        for (l, &gl) in gamma.iter().enumerate() {
            if gl != 0.0 {
                rho.scaled_add(-gl, &self.gram.row(l));
            }
        }
        if let Some(j) = self.excluded {
            rho[j] = 0.0;
        }
        rho
    }

    /// λ at and above which the solution is zero.
    pub fn lambda_max(&self) -> f64 {
        self.target
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != self.excluded)
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max)
    }

    pub fn solve(
        &self,
        lambda: f64,
        warm: Option<ArrayView1<'_, f64>>,
        opts: &FitOptions,
    ) -> Result<PenalizedFit> {
        let q = self.dim();
        if self.gram.dim() != (q, q) {
            return Err(FgError::Dimension(format!(
                "gram is {:?}, target has length {q}",
                self.gram.dim()
            )));
        }
        if !(lambda >= 0.0) {
            return Err(FgError::InvalidArgument(format!("lambda = {lambda}")));
        }
        let mut gamma = match warm {
            Some(w) => w.to_owned(),
            None => Array1::zeros(q),
        };
        if let Some(j) = self.excluded {
            gamma[j] = 0.0;
        }
        let mut rho = self.residual_correlation(gamma.view());

        let mut sweeps = 0;
        let mut converged = false;
        let mut active: Vec<usize> = Vec::new();
        'outer: while sweeps < opts.max_inner {
            let change = self.sweep(0..q, lambda, &mut gamma, &mut rho);
            sweeps += 1;
            if change < opts.inner_tol {
                converged = true;
                break;
            }
            active.clear();
            active.extend(gamma.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(k, _)| k));
            loop {
                if sweeps >= opts.max_inner {
                    break 'outer;
                }
                let change = self.sweep(active.iter().copied(), lambda, &mut gamma, &mut rho);
                sweeps += 1;
                if change < opts.inner_tol {
                    break;
                }
            }
        }

        // fresh residual so the certificate does not inherit drift
        let rho = self.residual_correlation(gamma.view());
        let kkt = kkt_residual((-&rho).view(), gamma.view(), lambda);
        let objective = self.loss(gamma.view()) + 2.0 * lambda * l1_norm(gamma.view());
        Ok(PenalizedFit {
            beta: gamma,
            lambda,
            objective,
            iterations: sweeps,
            converged: converged && kkt <= opts.kkt_tol,
            kkt_residual: kkt,
        })
    }

    fn sweep(
        &self,
        coords: impl Iterator<Item = usize>,
        lambda: f64,
        gamma: &mut Array1<f64>,
        rho: &mut Array1<f64>,
    ) -> f64 {
        let mut max_change: f64 = 0.0;
        for k in coords {
            if Some(k) == self.excluded {
                continue;
            }
            let gkk = self.gram[[k, k]];
            if gkk <= 0.0 {
                continue;
            }
            let old = gamma[k];
            let new = soft_threshold(rho[k] + gkk * old, lambda) / gkk;
            let delta = new - old;
            if delta != 0.0 {
                gamma[k] = new;
                rho.scaled_add(-delta, &self.gram.row(k));
                max_change = max_change.max(delta.abs());
            }
        }
        if let Some(j) = self.excluded {
            rho[j] = 0.0;
        }
        max_change
    }
}

/// Minimizes `n⁻¹‖y - Xγ‖² + 2λ‖γ‖₁` by covariance-update coordinate descent.
pub fn fit_linear_lasso(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    opts: &FitOptions,
) -> Result<PenalizedFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(FgError::Dimension(format!(
            "{} rows in X, {} responses",
            n,
            y.len()
        )));
    }
    let nf = n as f64;
    let gram: Array2<f64> = x.t().dot(&x) / nf;
    let target = x.t().dot(&y) / nf;
    let yy = y.dot(&y) / nf;
    GramLasso::new(gram.view(), target.view(), yy).solve(lambda, None, opts)
}
