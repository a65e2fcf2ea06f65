use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_path, FitOptions};
use crate::censoring::{build_risk_grid, km_censoring};
use crate::data::CompetingRisksData;
use crate::error::{FgError, Result};
use crate::pseudolik::PseudoLikelihood;

/// Cross-validated pseudo-likelihood deviance along a λ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    /// Per-λ mean over folds of the fold deviance.
    pub mean_loss: Vec<f64>,
    /// Per-λ standard error of the fold deviances.
    pub se_loss: Vec<f64>,
    /// folds × grid deviances.
    pub fold_loss: Array2<f64>,
    pub index_min: usize,
    pub index_1se: usize,
    pub lambda_min: f64,
    pub lambda_1se: f64,
}

impl CvResult {
    /// Whether `λ_min` lies strictly inside the grid.
    pub fn min_is_interior(&self) -> bool {
        self.index_min > 0 && self.index_min + 1 < self.lambda_grid.len()
    }
}

/// Fold label of each subject: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// K-fold cross-validation of the Fine-Gray LASSO.
///
/// For fold `k` the censoring KM and the risk grid are rebuilt from the
/// training part alone, the path is fitted there, and the fold deviance is
/// `-2 [l(β̂₋ₖ) - l₋ₖ(β̂₋ₖ)]` where `l = n·m` is the unnormalized
/// log pseudo-likelihood on the full data and on the training data.
///
/// The grid is cut to the part that every fold's path reached before
/// saturating.
pub fn cross_validate(
    data: &CompetingRisksData,
    lambda_grid: &[f64],
    folds: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CvResult> {
    if folds < 2 || folds > data.n() {
        return Err(FgError::InvalidArgument(format!(
            "folds = {folds} with n = {}",
            data.n()
        )));
    }
    if lambda_grid.is_empty() || lambda_grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(FgError::InvalidArgument(
            "lambda grid must be non-empty and strictly descending".into(),
        ));
    }
    let assignment = fold_assignment(data.n(), folds, seed);
    let train_sets: Vec<Vec<usize>> = (0..folds)
        .map(|k| (0..data.n()).filter(|&i| assignment[i] != k).collect())
        .collect();
    for (k, rows) in train_sets.iter().enumerate() {
        if rows.iter().all(|&i| data.status_codes()[i] != 1) {
            return Err(FgError::EmptyFold { fold: k, folds });
        }
    }

    let full_grid = build_risk_grid(data, &km_censoring(data))?;
    let full = PseudoLikelihood::new(data, &full_grid)?;
    let n_full = data.n() as f64;

    let per_fold: Vec<Result<Vec<f64>>> = train_sets
        .par_iter()
        .map(|rows| {
            let train = data.subset(rows);
            let grid = build_risk_grid(&train, &km_censoring(&train))?;
            let lik = PseudoLikelihood::new(&train, &grid)?;
            let fits = fit_path(&lik, lambda_grid, opts)?;
            let n_train = train.n() as f64;
            fits.iter()
                .map(|fit| {
                    let l_full = n_full * full.loglik(fit.beta.view())?;
                    let l_train = n_train * lik.loglik(fit.beta.view())?;
                    Ok(-2.0 * (l_full - l_train))
                })
                .collect()
        })
        .collect();

    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;
    // paths stop at saturation; keep the part every fold reached
    let n_l = per_fold.iter().map(Vec::len).min().unwrap_or(0);
    let lambda_grid = &lambda_grid[..n_l];
    let mut fold_loss = Array2::zeros((folds, n_l));
    for (k, losses) in per_fold.into_iter().enumerate() {
        for (l, v) in losses.into_iter().take(n_l).enumerate() {
            if !v.is_finite() {
                return Err(FgError::NonFinite {
                    context: "cv loss",
                    index: l,
                });
            }
            fold_loss[[k, l]] = v;
        }
    }
    let kf = folds as f64;
    let mean_loss: Vec<f64> = (0..n_l).map(|l| fold_loss.column(l).sum() / kf).collect();
    let se_loss: Vec<f64> = (0..n_l)
        .map(|l| {
            let m = mean_loss[l];
            let ss: f64 = fold_loss.column(l).iter().map(|v| (v - m) * (v - m)).sum();
            (ss / (kf - 1.0)).sqrt() / kf.sqrt()
        })
        .collect();

    // strict improvement only, so ties go to the larger λ
    let mut index_min = 0;
    for l in 1..n_l {
        if mean_loss[l] < mean_loss[index_min] {
            index_min = l;
        }
    }
    let bound = mean_loss[index_min] + se_loss[index_min];
    let index_1se = (0..=index_min)
        .find(|&l| mean_loss[l] <= bound)
        .unwrap_or(index_min);

    Ok(CvResult {
        lambda_grid: lambda_grid.to_vec(),
        mean_loss,
        se_loss,
        fold_loss,
        index_min,
        index_1se,
        lambda_min: lambda_grid[index_min],
        lambda_1se: lambda_grid[index_1se],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = fold_assignment(23, 5, 7);
        let b = fold_assignment(23, 5, 7);
        assert_eq!(a, b);
        let mut counts = [0; 5];
        a.iter().for_each(|&f| counts[f] += 1);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert_ne!(a, fold_assignment(23, 5, 8));
    }
}
