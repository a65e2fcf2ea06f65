//! Nodewise LASSO estimate of the inverse information matrix and the
//! one-step bias-corrected estimator.
//!
//! The regressions act on the score contributions `Ξ̂` through their second
//! moment `Σ̂ = n⁻¹ ΞᵀΞ`: regressing column `j` on the others with penalty
//! `2λ_j‖γ‖₁` gives `γ̂_j`, and
//! `τ̂_j² = Γ_j(γ̂_j) + λ_j‖γ̂_j‖₁`. Row `j` of `Θ̂` is
//! `(−γ̂_{j,1}, …, 1, …, −γ̂_{j,p}) / τ̂_j²`, so that `(Θ̂Σ̂)_{jj} = 1` and the
//! off-diagonal entries of row `j` are bounded by `λ_j / τ̂_j²`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};
use crate::pseudolik::XiMatrix;
use crate::solver::{fold_assignment, FitOptions, GramLasso};

/// Smallest admissible `τ̂_j²`.
pub const TAU_SQ_FLOOR: f64 = 1e-12;

/// Tolerance of the KKT checks run when `Θ̂` is assembled.
pub const KKT_CHECK_TOL: f64 = 1e-6;

/// Penalties without improvement after which the nodewise CV walk stops.
pub const CV_PATIENCE: usize = 5;

/// Residual fraction `Γ_j(γ)/Σ̂_jj` below which a nodewise fit is saturated.
pub const SATURATION_RESIDUAL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodewiseOptions {
    pub folds: usize,
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub seed: u64,
    /// Solver settings for the reported fits. These must be tight: the
    /// diagonal identity of `Θ̂Σ̂` holds only up to the KKT error.
    pub fit: FitOptions,
    /// Looser settings for the cross-validation paths.
    pub cv_fit: FitOptions,
}

impl Default for NodewiseOptions {
    fn default() -> Self {
        NodewiseOptions {
            folds: 10,
            n_lambdas: 40,
            lambda_min_ratio: 0.01,
            seed: 0,
            fit: FitOptions {
                inner_tol: 1e-13,
                kkt_tol: 1e-10,
                ..FitOptions::default()
            },
            cv_fit: FitOptions {
                inner_tol: 1e-7,
                kkt_tol: 1e-5,
                ..FitOptions::default()
            },
        }
    }
}

/// One nodewise regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodewiseFit {
    pub column: usize,
    /// Length-p coefficients with a zero at `column`.
    pub coefficients: Array1<f64>,
    pub tau_sq: f64,
    pub lambda_j: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

impl NodewiseFit {
    /// `γ̂_j` as a (p−1)-vector (column `j` removed).
    pub fn gamma(&self) -> Array1<f64> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != self.column)
            .map(|(_, &g)| g)
            .collect()
    }
}

/// Shared state for the p nodewise regressions of one `Ξ̂`.
pub struct Nodewise<'a> {
    xi: &'a XiMatrix,
    sigma: Array2<f64>,
}

impl<'a> Nodewise<'a> {
    pub fn new(xi: &'a XiMatrix) -> Self {
        Nodewise {
            xi,
            sigma: xi.sigma_hat(),
        }
    }

    pub fn sigma_hat(&self) -> &Array2<f64> {
        &self.sigma
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    fn problem(&self, j: usize) -> GramLasso<'_> {
        GramLasso::new(self.sigma.view(), self.sigma.column(j), self.sigma[[j, j]]).excluding(j)
    }

    pub fn lambda_max(&self, j: usize) -> f64 {
        self.problem(j).lambda_max()
    }

    /// Nodewise LASSO for column `j` at penalty `λ_j`.
    pub fn fit(&self, j: usize, lambda_j: f64, opts: &FitOptions) -> Result<NodewiseFit> {
        self.fit_from(j, lambda_j, None, opts)
    }

    fn fit_from(
        &self,
        j: usize,
        lambda_j: f64,
        warm: Option<ArrayView1<'_, f64>>,
        opts: &FitOptions,
    ) -> Result<NodewiseFit> {
        if j >= self.p() {
            return Err(FgError::InvalidArgument(format!(
                "column {j} out of range for p = {}",
                self.p()
            )));
        }
        let problem = self.problem(j);
        let fit = problem.solve(lambda_j, warm, opts)?;
        let l1: f64 = fit.beta.iter().map(|g| g.abs()).sum();
        let tau_sq = problem.loss(fit.beta.view()) + lambda_j * l1;
        if !(tau_sq >= TAU_SQ_FLOOR) {
            return Err(FgError::DegenerateNodewise { column: j, tau_sq });
        }
        Ok(NodewiseFit {
            column: j,
            coefficients: fit.beta,
            tau_sq,
            lambda_j,
            kkt_residual: fit.kkt_residual,
            converged: fit.converged,
        })
    }

    /// Fits column `j` along the descending grid (warm starts) down to
    /// `lambda_j`.
    fn fit_along(&self, j: usize, grid: &[f64], lambda_j: f64, opts: &NodewiseOptions) -> Result<NodewiseFit> {
        let mut warm: Option<Array1<f64>> = None;
        for &l in grid.iter().take_while(|&&l| l > lambda_j) {
            let fit = self.problem(j).solve(l, warm.as_ref().map(|w| w.view()), &opts.cv_fit)?;
            warm = Some(fit.beta);
        }
        self.fit_from(j, lambda_j, warm.as_ref().map(|w| w.view()), &opts.fit)
    }

    pub fn lambda_grid(&self, j: usize, opts: &NodewiseOptions) -> Result<Vec<f64>> {
        let lmax = self.lambda_max(j);
        if lmax == 0.0 {
            // column j is uncorrelated with every other one
            return Ok(vec![0.0]);
        }
        crate::solver::log_grid(lmax, opts.n_lambdas, opts.lambda_min_ratio)
    }
}

/// Fold-wise Gram matrices for cross-validating the nodewise penalties.
pub struct NodewiseCv<'a> {
    base: &'a Nodewise<'a>,
    train_gram: Vec<Array2<f64>>,
    valid_rows: Vec<Array2<f64>>,
    /// Non-zero rows of `Ξ̂` in each training fold.
    train_rank: Vec<usize>,
}

impl<'a> NodewiseCv<'a> {
    pub fn new(base: &'a Nodewise<'a>, folds: usize, seed: u64) -> Result<Self> {
        let xi = base.xi.rows();
        let n = xi.nrows();
        if folds < 2 || folds > n {
            return Err(FgError::InvalidArgument(format!("folds = {folds} with n = {n}")));
        }
        let assignment = fold_assignment(n, folds, seed);
        let total = &base.sigma * n as f64;
        let mut train_gram = Vec::with_capacity(folds);
        let mut valid_rows = Vec::with_capacity(folds);
        let mut train_rank = Vec::with_capacity(folds);
        let total_nonzero = (0..n).filter(|&i| xi.row(i).iter().any(|&x| x != 0.0)).count();
        for k in 0..folds {
            let rows: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
            // rows of Ξ̂ that are zero contribute nothing to any Gram
            let nonzero: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&i| xi.row(i).iter().any(|&x| x != 0.0))
                .collect();
            let v = xi.select(Axis(0), &nonzero);
            let n_train = (n - rows.len()) as f64;
            train_gram.push((&total - &v.t().dot(&v)) / n_train);
            train_rank.push(total_nonzero - nonzero.len());
            valid_rows.push(v);
        }
        Ok(NodewiseCv {
            base,
            train_gram,
            valid_rows,
            train_rank,
        })
    }

    fn fold_sizes(&self) -> Vec<usize> {
        let n = self.base.xi.n();
        let folds = self.train_gram.len();
        (0..folds).map(|k| n / folds + usize::from(k < n % folds)).collect()
    }

    /// Cross-validated `λ_j` (smallest mean validation error, ties toward
    /// the larger penalty) and its grid.
    ///
    /// The grid is walked from the top with every fold in step. The walk
    /// ends once the mean validation error has not improved for
    /// [`CV_PATIENCE`] consecutive penalties, or once a training fit
    /// explains all but [`SATURATION_RESIDUAL`] of the response or uses as
    /// many coefficients as the fold has non-zero rows.
    pub fn select(&self, j: usize, opts: &NodewiseOptions) -> Result<(f64, Vec<f64>)> {
        let grid = self.base.lambda_grid(j, opts)?;
        if grid.len() == 1 {
            return Ok((grid[0], grid));
        }
        let sizes = self.fold_sizes();
        let folds = self.train_gram.len();
        let mut warm: Vec<Option<Array1<f64>>> = vec![None; folds];
        let mut loss = Vec::with_capacity(grid.len());
        let mut best = 0;
        for (l, &lambda) in grid.iter().enumerate() {
            let mut total = 0.0;
            let mut saturated = false;
            for (k, gram) in self.train_gram.iter().enumerate() {
                let problem = GramLasso::new(gram.view(), gram.column(j), gram[[j, j]]).excluding(j);
                let fit = problem.solve(lambda, warm[k].as_ref().map(|w| w.view()), &opts.cv_fit)?;
                let v = &self.valid_rows[k];
                let pred = v.dot(&fit.beta);
                let sse: f64 = v
                    .column(j)
                    .iter()
                    .zip(&pred)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                total += sse / sizes[k] as f64;
                let nonzero = fit.beta.iter().filter(|g| **g != 0.0).count();
                if problem.loss(fit.beta.view()) <= SATURATION_RESIDUAL * gram[[j, j]]
                    || nonzero >= self.train_rank[k]
                {
                    saturated = true;
                }
                warm[k] = Some(fit.beta);
            }
            loss.push(total);
            if total < loss[best] {
                best = l;
            }
            if saturated || l - best >= CV_PATIENCE {
                break;
            }
        }
        Ok((grid[best], grid))
    }
}

/// Nodewise LASSO for a single column.
pub fn nodewise(xi: &XiMatrix, j: usize, lambda_j: f64) -> Result<NodewiseFit> {
    Nodewise::new(xi).fit(j, lambda_j, &NodewiseOptions::default().fit)
}

/// KKT diagnostics of one assembled row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub row: usize,
    /// `(Θ̂Σ̂)_{jj}`
    pub diagonal: f64,
    /// `max_{k≠j} |(Θ̂Σ̂)_{jk}|`
    pub max_off_diagonal: f64,
    pub lambda_j: f64,
    pub tau_sq: f64,
    pub nonzeros: usize,
}

impl RowDiagnostics {
    /// Bound implied by the nodewise KKT conditions.
    pub fn off_diagonal_bound(&self) -> f64 {
        self.lambda_j / self.tau_sq
    }
}

/// Rows of the approximate inverse information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaHat {
    rows: Vec<usize>,
    matrix: Array2<f64>,
    pub fits: Vec<NodewiseFit>,
    pub diagnostics: Vec<RowDiagnostics>,
}

impl ThetaHat {
    /// Assembles the requested rows from their nodewise fits and checks the
    /// KKT identities against `sigma`.
    pub fn assemble(fits: Vec<NodewiseFit>, sigma: &Array2<f64>) -> Result<Self> {
        let p = sigma.nrows();
        let mut matrix = Array2::zeros((fits.len(), p));
        let mut diagnostics = Vec::with_capacity(fits.len());
        for (r, fit) in fits.iter().enumerate() {
            let j = fit.column;
            let mut row = matrix.row_mut(r);
            for k in 0..p {
                row[k] = if k == j {
                    1.0 / fit.tau_sq
                } else {
                    -fit.coefficients[k] / fit.tau_sq
                };
            }
            let prod = sigma.t().dot(&row);
            let diagonal = prod[j];
            let max_off_diagonal = prod
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .fold(0.0, |m: f64, (_, v)| m.max(v.abs()));
            let diag = RowDiagnostics {
                row: j,
                diagonal,
                max_off_diagonal,
                lambda_j: fit.lambda_j,
                tau_sq: fit.tau_sq,
                nonzeros: fit.coefficients.iter().filter(|g| **g != 0.0).count(),
            };
            let excess = (diagonal - 1.0)
                .abs()
                .max(max_off_diagonal - diag.off_diagonal_bound());
            if excess > KKT_CHECK_TOL {
                return Err(FgError::KktViolation { row: j, excess });
            }
            diagnostics.push(diag);
        }
        Ok(ThetaHat {
            rows: fits.iter().map(|f| f.column).collect(),
            matrix,
            fits,
            diagnostics,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.p() && self.rows.iter().enumerate().all(|(r, &j)| r == j)
    }

    /// r×p matrix of the computed rows, in the order of [`rows`](Self::rows).
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn position(&self, j: usize) -> Option<usize> {
        self.rows.iter().position(|&r| r == j)
    }

    pub fn row(&self, j: usize) -> Option<ArrayView1<'_, f64>> {
        self.position(j).map(|r| self.matrix.row(r))
    }

    /// `Θ̂ᵀ c` for a contrast supported on the computed rows.
    pub fn transpose_times(&self, c: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.p());
        for (j, &cj) in c.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            let row = self.row(j).ok_or_else(|| {
                FgError::InvalidArgument(format!("contrast uses row {j}, which was not estimated"))
            })?;
            out.scaled_add(cj, &row);
        }
        Ok(out)
    }
}

/// `Θ̂` with all rows at the given penalties.
pub fn theta_hat(xi: &XiMatrix, lambdas: &[f64]) -> Result<ThetaHat> {
    let base = Nodewise::new(xi);
    if lambdas.len() != base.p() {
        return Err(FgError::Dimension(format!(
            "{} penalties for p = {}",
            lambdas.len(),
            base.p()
        )));
    }
    let opts = NodewiseOptions::default().fit;
    let fits = (0..base.p())
        .into_par_iter()
        .map(|j| base.fit(j, lambdas[j], &opts))
        .collect::<Result<Vec<_>>>()?;
    ThetaHat::assemble(fits, base.sigma_hat())
}

/// How each row's penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NodewisePenalty {
    /// Per-row K-fold cross-validation.
    CrossValidated,
    /// One value for every row.
    Shared(f64),
}

/// `Θ̂` rows `rows` (all rows when `None`).
pub fn theta_hat_with(
    xi: &XiMatrix,
    rows: Option<&[usize]>,
    penalty: NodewisePenalty,
    opts: &NodewiseOptions,
) -> Result<ThetaHat> {
    let base = Nodewise::new(xi);
    let all: Vec<usize> = (0..base.p()).collect();
    let rows = rows.unwrap_or(&all);
    let fits = match penalty {
        NodewisePenalty::Shared(lambda) => rows
            .par_iter()
            .map(|&j| base.fit(j, lambda, &opts.fit))
            .collect::<Result<Vec<_>>>()?,
        NodewisePenalty::CrossValidated => {
            let cv = NodewiseCv::new(&base, opts.folds, opts.seed)?;
            rows.par_iter()
                .map(|&j| {
                    let (lambda, grid) = cv.select(j, opts)?;
                    base.fit_along(j, &grid, lambda, opts)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    ThetaHat::assemble(fits, base.sigma_hat())
}

/// `b̂ = β̂ + Θ̂ ṁ(β̂)` on the rows of `Θ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepEstimate {
    pub rows: Vec<usize>,
    pub b: Array1<f64>,
    pub beta_init: Array1<f64>,
    pub score_at_init: Array1<f64>,
}

impl OneStepEstimate {
    pub fn get(&self, j: usize) -> Option<f64> {
        self.rows.iter().position(|&r| r == j).map(|r| self.b[r])
    }

    /// The full corrected vector, available when every row was estimated.
    pub fn full(&self) -> Option<Array1<f64>> {
        let p = self.beta_init.len();
        if self.rows.len() != p {
            return None;
        }
        let mut out = Array1::zeros(p);
        for (r, &j) in self.rows.iter().enumerate() {
            out[j] = self.b[r];
        }
        Some(out)
    }
}

pub fn one_step(
    beta_init: ArrayView1<'_, f64>,
    theta: &ThetaHat,
    score: ArrayView1<'_, f64>,
) -> Result<OneStepEstimate> {
    if beta_init.len() != theta.p() || score.len() != theta.p() {
        return Err(FgError::Dimension(format!(
            "beta {} / score {} / theta {}",
            beta_init.len(),
            score.len(),
            theta.p()
        )));
    }
    let correction = theta.matrix().dot(&score);
    let b = theta
        .rows()
        .iter()
        .zip(&correction)
        .map(|(&j, c)| beta_init[j] + c)
        .collect();
    Ok(OneStepEstimate {
        rows: theta.rows().to_vec(),
        b,
        beta_init: beta_init.to_owned(),
        score_at_init: score.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn xi_from(rows: Array2<f64>) -> XiMatrix {
        XiMatrix::from_rows(rows)
    }

    #[test]
    fn single_covariate_is_scalar_inverse() {
        let xi = xi_from(array![[1.0], [-2.0], [0.0], [0.5]]);
        let sigma = (1.0 + 4.0 + 0.25) / 4.0;
        let theta = theta_hat(&xi, &[0.1]).unwrap();
        assert!((theta.matrix()[[0, 0]] - 1.0 / sigma).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_columns_give_zero_gamma() {
        let xi = xi_from(array![[1.0, 0.0], [0.0, 2.0], [-1.0, 0.0], [0.0, -1.0]]);
        let fit = nodewise(&xi, 0, 0.5).unwrap();
        assert!(fit.coefficients.iter().all(|g| *g == 0.0));
        assert!((fit.tau_sq - 2.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_columns_soft_threshold_slope() {
        let xi = xi_from(array![[1.0, 0.8], [2.0, 1.5], [-1.0, -0.2], [0.5, 1.0], [0.0, -0.7]]);
        let s = xi.sigma_hat();
        let lambda = 0.05;
        let fit = nodewise(&xi, 0, lambda).unwrap();
        let expected = crate::solver::soft_threshold(s[[1, 0]], lambda) / s[[1, 1]];
        assert!((fit.coefficients[1] - expected).abs() < 1e-12);
        assert_eq!(fit.gamma().len(), 1);
    }

    #[test]
    fn row_layout_negates_every_off_diagonal() {
        let xi = xi_from(array![
            [1.0, 0.8, 0.1],
            [2.0, 1.5, -0.3],
            [-1.0, -0.2, 0.9],
            [0.5, 1.0, 0.4],
            [0.0, -0.7, -1.2]
        ]);
        let theta = theta_hat(&xi, &[0.0, 0.0, 0.0]).unwrap();
        for fit in &theta.fits {
            let j = fit.column;
            for k in 0..3 {
                let want = if k == j {
                    1.0 / fit.tau_sq
                } else {
                    -fit.coefficients[k] / fit.tau_sq
                };
                assert_eq!(theta.matrix()[[j, k]], want, "entry ({j},{k})");
            }
        }
    }

    #[test]
    fn one_step_without_score_is_identity() {
        let xi = xi_from(array![[1.0, 0.2], [0.3, 1.0], [-1.0, 0.5]]);
        let theta = theta_hat(&xi, &[0.01, 0.01]).unwrap();
        let beta = array![0.4, -0.1];
        let est = one_step(beta.view(), &theta, array![0.0, 0.0].view()).unwrap();
        assert_eq!(est.full().unwrap(), beta);
    }

    #[test]
    fn partial_rows_reject_foreign_contrast() {
        let xi = xi_from(array![[1.0, 0.2], [0.3, 1.0], [-1.0, 0.5]]);
        let theta = theta_hat_with(
            &xi,
            Some(&[1]),
            NodewisePenalty::Shared(0.01),
            &NodewiseOptions::default(),
        )
        .unwrap();
        assert!(theta.row(1).is_some());
        assert!(theta.transpose_times(array![1.0, 0.0].view()).is_err());
    }
}
