//! Sandwich variance from the influence decomposition, confidence intervals
//! and Wald tests for linear contrasts.
//!
//! Integrals against the cause-1 counting processes are sums over the
//! distinct cause-1 grid times; integrals against the censoring processes are
//! sums over the distinct observed censoring times. `q̂(t)` integrates over
//! grid times `u >= t` for subjects with `X_i < t`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::debias::{OneStepEstimate, ThetaHat};
use crate::error::{FgError, Result};
use crate::pseudolik::PseudoLikelihood;

/// Influence contributions `η̂_i`, `ψ̂_i` at a given β.
#[derive(Debug, Clone)]
pub struct InfluenceSet {
    pub eta: Array2<f64>,
    pub psi: Array2<f64>,
    /// `q̂(t)` at each censoring time (rows).
    pub q_hat: Array2<f64>,
    pub pi_hat: Vec<f64>,
    pub censor_times: Vec<f64>,
}

impl InfluenceSet {
    pub fn n(&self) -> usize {
        self.eta.nrows()
    }

    /// `η̂_i + ψ̂_i`, n×p.
    pub fn total(&self) -> Array2<f64> {
        &self.eta + &self.psi
    }

    /// Meat matrix `Σ̌ = n⁻¹ Σ_i (η̂_i + ψ̂_i)^{⊗2}`.
    pub fn meat(&self) -> Array2<f64> {
        let u = self.total();
        u.t().dot(&u) / self.n() as f64
    }

    /// `vᵀ Σ̌ v` without forming `Σ̌`.
    pub fn quadratic_form(&self, v: ArrayView1<'_, f64>) -> f64 {
        let proj = self.eta.dot(&v) + self.psi.dot(&v);
        proj.iter().map(|x| x * x).sum::<f64>() / self.n() as f64
    }
}

/// Builds `η̂_i`, `q̂(t)`, `ψ̂_i` at `beta`.
///
/// The martingale increment is
/// `dM̂¹_i(t_k) = ΔN_i(t_k) − ω_i(t_k) e^{β'Z_i} d_k / (n S⁽⁰⁾(t_k))`;
/// the IPCW weight enters the compensator once, so `n⁻¹ Σ_i η̂_i` reproduces
/// the score exactly.
pub fn influence(lik: &PseudoLikelihood<'_>, beta: ArrayView1<'_, f64>) -> Result<InfluenceSet> {
    let n = lik.n();
    let p = lik.p();
    if beta.len() != p {
        return Err(FgError::Dimension(format!("beta has length {}, expected {p}", beta.len())));
    }
    let grid = lik.grid();
    let z = lik.data().covariates();
    let times = lik.data().times();
    let eta_lin = lik.linear_predictor(beta);
    let state = lik.eta_state(eta_lin.view())?;
    let zbar = state.probs.dot(&z);
    let k_len = grid.k();

    // c[k, i] = ΔN_i(t_k) − π_ik d_k
    let mut c = state.probs.clone();
    for (mut row, &d) in c.axis_iter_mut(Axis(0)).zip(grid.event_counts()) {
        row.mapv_inplace(|pi| -pi * d as f64);
    }
    for i in 0..n {
        if lik.delta()[i] != 0.0 {
            let k = grid.event_index(i).expect("event on grid");
            c[[k, i]] += 1.0;
        }
    }

    // η̂_i = Z_i Σ_k c_ki − Σ_k c_ki Z̄_k
    let row_sum = c.sum_axis(Axis(0));
    let eta = &z * &row_sum.view().insert_axis(Axis(1)) - c.t().dot(&zbar);

    // q̂ at each censoring time
    let censor_times = grid.censor_times().to_vec();
    let n_c = censor_times.len();
    let mut q_hat = Array2::zeros((n_c, p));
    if n_c > 0 {
        let event_times = grid.event_times();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut a = Array1::<f64>::zeros(n);
        let mut b = Array1::<f64>::zeros(k_len);
        for (ci, &t) in censor_times.iter().enumerate() {
            let k0 = event_times.partition_point(|&u| u < t);
            if k0 == k_len {
                continue;
            }
            a.fill(0.0);
            b.fill(0.0);
            for &i in order.iter().take_while(|&&i| times[i] < t) {
                let mut s = 0.0;
                for k in k0..k_len {
                    let v = c[[k, i]];
                    s += v;
                    b[k] += v;
                }
                a[i] = s;
            }
            let q = (z.t().dot(&a) - zbar.t().dot(&b)) / n as f64;
            q_hat.row_mut(ci).assign(&q);
        }
    }

    // ψ̂_i = Σ_c q̂(t_c)/π̂(t_c) [I(censored at t_c) − I(X_i ≥ t_c) d_c / r_c]
    let pi_hat = grid.pi_hat().to_vec();
    let mut coef = Array2::<f64>::zeros((n, n_c));
    for (ci, &t) in censor_times.iter().enumerate() {
        let pi = pi_hat[ci];
        if !(pi > 0.0) {
            return Err(FgError::NonFinite {
                context: "pi_hat at censoring time",
                index: ci,
            });
        }
        let share = grid.censor_counts()[ci] as f64 / grid.censor_risk()[ci] as f64;
        for i in 0..n {
            if times[i] >= t {
                let own = if lik.data().status_codes()[i] == 0 && times[i] == t {
                    1.0
                } else {
                    0.0
                };
                coef[[i, ci]] = (own - share) / pi;
            }
        }
    }
    let psi = coef.dot(&q_hat);

    Ok(InfluenceSet {
        eta,
        psi,
        q_hat,
        pi_hat,
        censor_times,
    })
}

/// Sandwich standard errors `sqrt(θ_jᵀ Σ̌ θ_j / n)` for every row of `Θ̂`.
pub fn standard_errors(theta: &ThetaHat, infl: &InfluenceSet) -> Vec<f64> {
    let n = infl.n() as f64;
    theta
        .matrix()
        .axis_iter(Axis(0))
        .map(|row| (infl.quadratic_form(row) / n).sqrt())
        .collect()
}

/// Two-step standard errors: the sandwich recomputed at `β = b̂`.
/// Requires every row of `Θ̂`, since `b̂` must be a full vector.
pub fn two_step_se(
    lik: &PseudoLikelihood<'_>,
    one_step: &OneStepEstimate,
    theta: &ThetaHat,
) -> Result<Vec<f64>> {
    let b = one_step.full().ok_or_else(|| {
        FgError::InvalidArgument("two-step SE needs the one-step estimate for every coefficient".into())
    })?;
    let infl = influence(lik, b.view())?;
    Ok(standard_errors(theta, &infl))
}

/// Two-sided standard normal quantile `z_{1-α/2}`.
pub fn normal_quantile(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided p-value `2 (1 − Φ(|z|))`.
pub fn two_sided_p_value(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Confidence interval and Wald test for `cᵀβ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastInference {
    /// Contrast scaled to unit L1 norm.
    pub contrast: Array1<f64>,
    pub estimate: f64,
    /// Sandwich SE at the initial estimate.
    pub se: f64,
    /// Two-step SE, when computed; the interval uses it.
    pub se_corrected: Option<f64>,
    pub ci: (f64, f64),
    /// Wald statistic with the uncorrected SE.
    pub z: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub theta0: f64,
}

impl ContrastInference {
    /// Switches the interval to the two-step SE; the test keeps `se`.
    pub fn with_corrected_se(mut self, se_corrected: f64) -> Self {
        let q = normal_quantile(self.alpha);
        self.ci = (self.estimate - q * se_corrected, self.estimate + q * se_corrected);
        self.se_corrected = Some(se_corrected);
        self
    }

    /// SE that the interval is built from.
    pub fn interval_se(&self) -> f64 {
        self.se_corrected.unwrap_or(self.se)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }

    pub fn rejects(&self) -> bool {
        self.p_value < self.alpha
    }
}

fn normalize_contrast(c: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let l1: f64 = c.iter().map(|x| x.abs()).sum();
    if !(l1 > 0.0) || !l1.is_finite() {
        return Err(FgError::InvalidArgument("contrast must be non-zero and finite".into()));
    }
    Ok(c.mapv(|x| x / l1))
}

/// CI `cᵀb̂ ± z_{1−α/2} sqrt(cᵀΘ̂Σ̌Θ̂ᵀc / n)` and Wald statistic
/// `√n (cᵀb̂ − θ₀) / sqrt(cᵀΘ̂Σ̌Θ̂ᵀc)` for `H₀: cᵀβ = θ₀`.
///
/// `theta0` is on the scale of the normalized contrast.
pub fn contrast_inference(
    c: ArrayView1<'_, f64>,
    one_step: &OneStepEstimate,
    theta: &ThetaHat,
    infl: &InfluenceSet,
    alpha: f64,
    theta0: f64,
) -> Result<ContrastInference> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FgError::InvalidArgument(format!("alpha = {alpha}")));
    }
    if c.len() != theta.p() {
        return Err(FgError::Dimension(format!(
            "contrast has length {}, expected {}",
            c.len(),
            theta.p()
        )));
    }
    let c = normalize_contrast(c)?;
    let mut estimate = 0.0;
    for (j, &cj) in c.iter().enumerate() {
        if cj != 0.0 {
            let bj = one_step.get(j).ok_or_else(|| {
                FgError::InvalidArgument(format!("no one-step estimate for coefficient {j}"))
            })?;
            estimate += cj * bj;
        }
    }
    let v = theta.transpose_times(c.view())?;
    let var = infl.quadratic_form(v.view());
    if !(var > 0.0) {
        return Err(FgError::NonPositiveVariance(var));
    }
    Ok(from_parts(c, estimate, var, infl.n(), alpha, theta0))
}

pub(crate) fn from_parts(
    contrast: Array1<f64>,
    estimate: f64,
    sandwich_var: f64,
    n: usize,
    alpha: f64,
    theta0: f64,
) -> ContrastInference {
    let se = (sandwich_var / n as f64).sqrt();
    let q = normal_quantile(alpha);
    let z = (n as f64).sqrt() * (estimate - theta0) / sandwich_var.sqrt();
    ContrastInference {
        contrast,
        estimate,
        se,
        se_corrected: None,
        ci: (estimate - q * se, estimate + q * se),
        z,
        p_value: two_sided_p_value(z),
        alpha,
        theta0,
    }
}
