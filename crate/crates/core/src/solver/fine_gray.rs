use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{kkt_residual, l1_norm, soft_threshold, FitOptions, PenalizedFit};
use crate::error::{FgError, Result};
use crate::pseudolik::{dot, PseudoLikelihood};

/// Quadratic model of a loss in the linear predictor around `η₀`:
///
/// `gᵀΔη + ½ Δηᵀ(diag(a) − PᵀP)Δη`, with `Δη = ZΔβ`.
///
/// The Fine-Gray solver builds one per outer iteration from the exact
/// Hessian of `-m` in η. With `g = -y/n`, `a = 1/n` and an empty `P` it is
/// the least-squares loss `(2n)⁻¹‖y - Zβ‖²` up to a constant.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub gradient: Array1<f64>,
    pub diagonal: Array1<f64>,
    /// r×n low-rank part.
    pub factor: Array2<f64>,
}

impl QuadraticModel {
    fn hessian_times(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = &self.diagonal * &v;
        if self.factor.nrows() > 0 {
            let pv = self.factor.dot(&v);
            out -= &self.factor.t().dot(&pv);
        }
        out
    }

    /// Minimizes the model plus `λ‖β‖₁` from `start` (the expansion point).
    /// `z_cols` is p×n. Coordinate descent runs on a working set made of the
    /// non-zero coordinates and the KKT violators, which grows until no
    /// coordinate outside it violates the model's KKT conditions. Returns the
    /// minimizer and the number of sweeps.
    pub fn solve(
        &self,
        z_cols: ArrayView2<'_, f64>,
        start: ArrayView1<'_, f64>,
        lambda: f64,
        opts: &FitOptions,
    ) -> (Array1<f64>, usize) {
        let p = z_cols.nrows();
        let grad0: Array1<f64> = z_cols
            .axis_iter(Axis(0))
            .map(|col| dot(col, self.gradient.view()))
            .collect();
        let mut beta = start.to_owned();
        let mut in_set = vec![false; p];
        let mut working = Vec::new();
        for k in 0..p {
            if beta[k] != 0.0 || grad0[k].abs() > lambda {
                in_set[k] = true;
                working.push(k);
            }
        }
        let mut sweeps = 0;
        loop {
            let m = working.len();
            let zw = z_cols.select(Axis(0), &working);
            let scaled = &zw * &self.diagonal.view().insert_axis(Axis(0));
            let mut hw = scaled.dot(&zw.t());
            if self.factor.nrows() > 0 {
                let pz = self.factor.dot(&zw.t());
                hw -= &pz.t().dot(&pz);
            }
            // model gradient on the working set at the current β
            let step: Array1<f64> = working.iter().map(|&k| beta[k] - start[k]).collect();
            let mut q: Array1<f64> = working.iter().map(|&k| grad0[k]).collect::<Array1<f64>>() + hw.dot(&step);

            let mut sweep = |coords: &mut dyn Iterator<Item = usize>, beta: &mut Array1<f64>| -> f64 {
                let mut max_change: f64 = 0.0;
                for i in coords {
                    let a = hw[[i, i]];
                    if a <= 1e-300 {
                        continue;
                    }
                    let k = working[i];
                    let old = beta[k];
                    let new = soft_threshold(a * old - q[i], lambda) / a;
                    let delta = new - old;
                    if delta != 0.0 {
                        beta[k] = new;
                        q.scaled_add(delta, &hw.column(i));
                        max_change = max_change.max(delta.abs() * a.sqrt());
                    }
                }
                max_change
            };
            'cd: while sweeps < opts.max_inner {
                let change = sweep(&mut (0..m), &mut beta);
                sweeps += 1;
                if change < opts.inner_tol {
                    break;
                }
                let active: Vec<usize> = (0..m).filter(|&i| beta[working[i]] != 0.0).collect();
                loop {
                    if sweeps >= opts.max_inner {
                        break 'cd;
                    }
                    let change = sweep(&mut active.iter().copied(), &mut beta);
                    sweeps += 1;
                    if change < opts.inner_tol {
                        break;
                    }
                }
            }

            let d_eta = zw.t().dot(&working.iter().map(|&k| beta[k] - start[k]).collect::<Array1<f64>>());
            let h_d = self.hessian_times(d_eta.view());
            let before = working.len();
            for k in 0..p {
                if !in_set[k] && (grad0[k] + dot(z_cols.row(k), h_d.view())).abs() > lambda {
                    in_set[k] = true;
                    working.push(k);
                }
            }
            if working.len() == before || sweeps >= opts.max_inner {
                break;
            }
        }
        (beta, sweeps)
    }
}

/// Smallest λ whose fit is identically zero, `‖ṁ(0)‖_∞`.
pub fn lambda_max(lik: &PseudoLikelihood<'_>) -> Result<f64> {
    let eta = Array1::zeros(lik.n());
    let state = lik.eta_state(eta.view())?;
    let g = lik.eta_gradient(&state);
    Ok(lik
        .z_transpose_times(g.view())
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// Log-spaced descending grid from [`lambda_max`] down to `ratio · λ_max`.
pub fn lambda_path(lik: &PseudoLikelihood<'_>, n_lambdas: usize, ratio: f64) -> Result<Vec<f64>> {
    let lmax = lambda_max(lik)?;
    log_grid(lmax, n_lambdas, ratio)
}

pub(crate) fn log_grid(lmax: f64, n_lambdas: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_lambdas == 0 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(FgError::InvalidArgument(format!(
            "path needs n_lambdas >= 1 and 0 < ratio < 1 (got {n_lambdas}, {ratio})"
        )));
    }
    if !(lmax > 0.0) {
        return Err(FgError::InvalidArgument(format!(
            "lambda_max = {lmax}; the score at zero vanishes"
        )));
    }
    if n_lambdas == 1 {
        return Ok(vec![lmax]);
    }
    let step = ratio.ln() / (n_lambdas - 1) as f64;
    Ok((0..n_lambdas)
        .map(|k| if k == 0 { lmax } else { lmax * (step * k as f64).exp() })
        .collect())
}

/// Minimizes `-m(β) + λ‖β‖₁`.
///
/// Outer loop: proximal Newton. The quadratic expansion of `-m` is
/// minimized by coordinate descent, followed by a backtracking line search
/// on the true objective. The loop ends once the
/// KKT residual is below `opts.kkt_tol`.
pub fn fit_fine_gray_lasso(
    lik: &PseudoLikelihood<'_>,
    lambda: f64,
    warm_start: Option<ArrayView1<'_, f64>>,
    opts: &FitOptions,
) -> Result<PenalizedFit> {
    let p = lik.p();
    if !(lambda >= 0.0) {
        return Err(FgError::InvalidArgument(format!("lambda = {lambda}")));
    }
    let mut beta = match warm_start {
        Some(w) if w.len() == p => w.to_owned(),
        Some(w) => {
            return Err(FgError::Dimension(format!(
                "warm start has length {}, expected {p}",
                w.len()
            )))
        }
        None => Array1::zeros(p),
    };
    let z = lik.data().covariates();
    let z_cols = lik.z_cols();

    let mut eta = z.dot(&beta);
    let mut state = lik.eta_state(eta.view())?;
    let mut objective = -lik.loglik_from(eta.view(), &state) + lambda * l1_norm(beta.view());
    let mut iterations = 0;
    let mut kkt;
    loop {
        let g = lik.eta_gradient(&state);
        let grad = lik.z_transpose_times(g.view());
        kkt = kkt_residual(grad.view(), beta.view(), lambda);
        if kkt <= opts.kkt_tol || iterations >= opts.max_outer {
            break;
        }
        iterations += 1;

        let (diagonal, factor) = lik.eta_hessian_parts(&state);
        let model = QuadraticModel {
            gradient: g,
            diagonal,
            factor,
        };
        let (proposal, _) = model.solve(z_cols, beta.view(), lambda, opts);
        let direction = &proposal - &beta;
        let predicted = grad.dot(&direction) + lambda * (l1_norm(proposal.view()) - l1_norm(beta.view()));
        if !(predicted < 0.0) {
            log::debug!("no descent direction at outer iteration {iterations} (kkt {kkt:e})");
            break;
        }
        let z_dir = z.dot(&direction);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand_eta = &eta + &(step * &z_dir);
            let cand_state = lik.eta_state(cand_eta.view())?;
            let cand_beta = &beta + &(step * &direction);
            let cand_obj =
                -lik.loglik_from(cand_eta.view(), &cand_state) + lambda * l1_norm(cand_beta.view());
            if cand_obj <= objective + 1e-4 * step * predicted {
                accepted = Some((cand_beta, cand_eta, cand_state, cand_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((b, e, s, obj)) = accepted else {
            log::debug!("line search failed at outer iteration {iterations} (kkt {kkt:e})");
            break;
        };
        debug_assert!(obj <= objective + 1e-12 * objective.abs().max(1.0));
        let rel_change = (objective - obj) / objective.abs().max(1.0);
        beta = b;
        eta = e;
        state = s;
        objective = obj;
        if rel_change <= f64::EPSILON {
            // objective no longer moves; stop and report the certificate
            let g = lik.eta_gradient(&state);
            kkt = kkt_residual(lik.z_transpose_times(g.view()).view(), beta.view(), lambda);
            break;
        }
    }
    Ok(PenalizedFit {
        beta,
        lambda,
        objective,
        iterations,
        converged: kkt <= opts.kkt_tol,
        kkt_residual: kkt,
    })
}

/// Deviance ratio `1 − m(β)/m(0)` at which a path stops.
pub const SATURATION_DEVIANCE_RATIO: f64 = 0.99;

/// Fits a descending λ sequence, each fit warm-started from the previous.
///
/// The path stops early, after the first saturated fit, once the support
/// size reaches the number of cause-1 events or the deviance ratio exceeds
/// [`SATURATION_DEVIANCE_RATIO`]; the result may be shorter than `lambdas`.
pub fn fit_path(
    lik: &PseudoLikelihood<'_>,
    lambdas: &[f64],
    opts: &FitOptions,
) -> Result<Vec<PenalizedFit>> {
    let events = lik.delta().sum() as usize;
    let null = lik.loglik(Array1::zeros(lik.p()).view())?;
    let mut fits: Vec<PenalizedFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = fits.last().map(|f| f.beta.view());
        let fit = fit_fine_gray_lasso(lik, lambda, warm, opts)?;
        if !fit.converged {
            log::warn!(
                "fit at lambda {lambda:.4e} did not converge (kkt {:.2e})",
                fit.kkt_residual
            );
        }
        let nonzero = fit.support().len();
        let ratio = if null < 0.0 {
            1.0 - lik.loglik(fit.beta.view())? / null
        } else {
            0.0
        };
        log::debug!(
            "lambda {lambda:.4e}: {nonzero} nonzero, deviance ratio {ratio:.4}, kkt {:.2e}",
            fit.kkt_residual
        );
        fits.push(fit);
        if nonzero >= events || ratio >= SATURATION_DEVIANCE_RATIO {
            break;
        }
    }
    Ok(fits)
}
