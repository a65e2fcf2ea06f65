//! Fine-Gray log pseudo-likelihood kernel.
//!
//! Everything is evaluated on the cause-1 grid of a [`RiskGrid`]. Within each
//! grid time the linear predictors of the at-risk subjects are shifted by
//! their maximum before exponentiating; the pseudo-likelihood is invariant to
//! that shift so no value changes, only the range of the exponentials.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::censoring::RiskGrid;
use crate::data::{CompetingRisksData, Status};
use crate::error::{FgError, Result};

/// Default cap on `p` for the dense negative Hessian.
pub const DEFAULT_HESSIAN_CAP: usize = 2000;

/// Risk-set moments `S⁽⁰⁾(t_k, β)`, `S⁽¹⁾(t_k, β)` and `Z̄(t_k, β)`.
#[derive(Debug, Clone)]
pub struct RiskAggregates {
    pub s0: Array1<f64>,
    pub log_s0: Array1<f64>,
    pub s1: Array2<f64>,
    pub zbar: Array2<f64>,
}

/// Per-subject score contributions: row `i` is `Z_i - Z̄(t_k)` at the
/// subject's cause-1 event time `t_k`, zero when it has no such event.
#[derive(Debug, Clone)]
pub struct XiMatrix {
    rows: Array2<f64>,
}

impl XiMatrix {
    pub fn from_rows(rows: Array2<f64>) -> Self {
        XiMatrix { rows }
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    /// Sample information `Σ̂ = n⁻¹ Σ_i Ξ̂_i Ξ̂_iᵀ`.
    pub fn sigma_hat(&self) -> Array2<f64> {
        let nonzero: Vec<usize> = self
            .rows
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(_, r)| r.iter().any(|&x| x != 0.0))
            .map(|(i, _)| i)
            .collect();
        let compact = self.rows.select(Axis(0), &nonzero);
        compact.t().dot(&compact) / self.n() as f64
    }
}

/// Quantities that depend on β only through the linear predictor.
#[derive(Debug, Clone)]
pub(crate) struct EtaState {
    /// `log Σ_j w_jk exp(η_j)`, i.e. `log(n S⁽⁰⁾)`.
    pub log_norm: Vec<f64>,
    /// K×n risk-set probabilities `w_ik exp(η_i) / Σ_j w_jk exp(η_j)`.
    pub probs: Array2<f64>,
}

/// Log pseudo-likelihood of a dataset on a fixed risk grid.
pub struct PseudoLikelihood<'a> {
    data: &'a CompetingRisksData,
    grid: &'a RiskGrid,
    /// p×n, row j is covariate column j.
    z_cols: Array2<f64>,
    /// 1 for subjects whose cause-1 event is on the grid.
    delta: Array1<f64>,
    hessian_cap: usize,
}

impl<'a> PseudoLikelihood<'a> {
    pub fn new(data: &'a CompetingRisksData, grid: &'a RiskGrid) -> Result<Self> {
        if grid.n() != data.n() {
            return Err(FgError::Dimension(format!(
                "grid built for {} subjects, data has {}",
                grid.n(),
                data.n()
            )));
        }
        let z_cols = data.covariates().t().as_standard_layout().into_owned();
        let delta = (0..data.n())
            .map(|i| {
                if data.status(i) == Status::Cause1 && grid.event_index(i).is_some() {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(PseudoLikelihood {
            data,
            grid,
            z_cols,
            delta,
            hessian_cap: DEFAULT_HESSIAN_CAP,
        })
    }

    pub fn with_hessian_cap(mut self, cap: usize) -> Self {
        self.hessian_cap = cap;
        self
    }

    pub fn data(&self) -> &CompetingRisksData {
        self.data
    }

    pub fn grid(&self) -> &RiskGrid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub(crate) fn z_cols(&self) -> ArrayView2<'_, f64> {
        self.z_cols.view()
    }

    pub(crate) fn delta(&self) -> ArrayView1<'_, f64> {
        self.delta.view()
    }

    fn check_beta(&self, beta: ArrayView1<'_, f64>) -> Result<()> {
        if beta.len() != self.p() {
            return Err(FgError::Dimension(format!(
                "beta has length {}, expected {}",
                beta.len(),
                self.p()
            )));
        }
        if let Some(j) = beta.iter().position(|b| !b.is_finite()) {
            return Err(FgError::NonFinite {
                context: "beta",
                index: j,
            });
        }
        Ok(())
    }

    pub fn linear_predictor(&self, beta: ArrayView1<'_, f64>) -> Array1<f64> {
        self.data.covariates().dot(&beta)
    }

    pub(crate) fn eta_state(&self, eta: ArrayView1<'_, f64>) -> Result<EtaState> {
        let w = self.grid.weights_by_time();
        let (k, n) = w.dim();
        let mut log_norm = Vec::with_capacity(k);
        let mut probs = Array2::zeros((k, n));
        for (kk, (wrow, mut prow)) in w
            .axis_iter(Axis(0))
            .zip(probs.axis_iter_mut(Axis(0)))
            .enumerate()
        {
            let mut shift = f64::NEG_INFINITY;
            for (&wi, &e) in wrow.iter().zip(eta) {
                if wi > 0.0 && e > shift {
                    shift = e;
                }
            }
            let mut sum = 0.0;
            for ((p, &wi), &e) in prow.iter_mut().zip(wrow).zip(eta) {
                if wi > 0.0 {
                    *p = wi * (e - shift).exp();
                    sum += *p;
                }
            }
            let ln = shift + sum.ln();
            if !ln.is_finite() || !(sum > 0.0) {
                return Err(FgError::NonFinite {
                    context: "risk-set sum",
                    index: kk,
                });
            }
            prow.mapv_inplace(|p| p / sum);
            log_norm.push(ln);
        }
        Ok(EtaState { log_norm, probs })
    }

    /// `m` from a linear predictor and its state.
    pub(crate) fn loglik_from(&self, eta: ArrayView1<'_, f64>, state: &EtaState) -> f64 {
        let events: f64 = eta.iter().zip(&self.delta).map(|(&e, &d)| e * d).sum();
        let norm: f64 = state
            .log_norm
            .iter()
            .zip(self.grid.event_counts())
            .map(|(&l, &d)| l * d as f64)
            .sum();
        (events - norm) / self.n() as f64
    }

    /// `m(η)` for a raw linear predictor.
    pub(crate) fn loglik_eta(&self, eta: ArrayView1<'_, f64>) -> Result<f64> {
        let state = self.eta_state(eta)?;
        Ok(self.loglik_from(eta, &state))
    }

    /// Gradient of `-m` with respect to the linear predictor.
    pub(crate) fn eta_gradient(&self, state: &EtaState) -> Array1<f64> {
        let d: Array1<f64> = self
            .grid
            .event_counts()
            .iter()
            .map(|&c| c as f64)
            .collect();
        let expected = state.probs.t().dot(&d);
        (expected - &self.delta) / self.n() as f64
    }

    /// Hessian of `-m` in the linear predictor as `diag(a) − PᵀP`, with
    /// `a = n⁻¹ Πᵀd` and row `k` of `P` equal to `sqrt(d_k / n) π_k`.
    pub(crate) fn eta_hessian_parts(&self, state: &EtaState) -> (Array1<f64>, Array2<f64>) {
        let n = self.n() as f64;
        let mut a = Array1::zeros(self.n());
        let mut factor = state.probs.clone();
        for (mut row, &d) in factor.axis_iter_mut(Axis(0)).zip(self.grid.event_counts()) {
            let d = d as f64;
            a.scaled_add(d / n, &row);
            let s = (d / n).sqrt();
            row.mapv_inplace(|p| p * s);
        }
        (a, factor)
    }

    /// `Zᵀ v`, used for every β-space gradient so that all callers see the
    /// same rounding.
    pub(crate) fn z_transpose_times(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.z_cols
            .axis_iter(Axis(0))
            .map(|col| dot(col, v))
            .collect()
    }

    pub fn aggregates(&self, beta: ArrayView1<'_, f64>) -> Result<RiskAggregates> {
        self.check_beta(beta)?;
        let eta = self.linear_predictor(beta);
        let state = self.eta_state(eta.view())?;
        let zbar = state.probs.dot(&self.data.covariates());
        let n = self.n() as f64;
        let log_s0: Array1<f64> = state.log_norm.iter().map(|l| l - n.ln()).collect();
        let s0 = log_s0.mapv(f64::exp);
        if let Some(k) = s0.iter().position(|s| !s.is_finite()) {
            return Err(FgError::NonFinite {
                context: "S0",
                index: k,
            });
        }
        let s1 = &zbar * &s0.view().insert_axis(Axis(1));
        Ok(RiskAggregates {
            s0,
            log_s0,
            s1,
            zbar,
        })
    }

    /// Log pseudo-likelihood `m(β)`, including the constant `log n` from the
    /// `n S⁽⁰⁾` inside the logarithm.
    pub fn loglik(&self, beta: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_beta(beta)?;
        let eta = self.linear_predictor(beta);
        self.loglik_eta(eta.view())
    }

    /// Score `ṁ(β) = n⁻¹ Σ_events (Z_i - Z̄(t_k, β))`.
    pub fn score(&self, beta: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_beta(beta)?;
        let eta = self.linear_predictor(beta);
        let state = self.eta_state(eta.view())?;
        let g = self.eta_gradient(&state);
        Ok(-self.z_transpose_times(g.view()))
    }

    /// Negative Hessian `n⁻¹ Σ_events [S⁽²⁾/S⁽⁰⁾ - Z̄^{⊗2}](t_k, β)`.
    pub fn neg_hessian(&self, beta: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        self.check_beta(beta)?;
        let p = self.p();
        if p > self.hessian_cap {
            return Err(FgError::TooLarge {
                p,
                cap: self.hessian_cap,
            });
        }
        let eta = self.linear_predictor(beta);
        let state = self.eta_state(eta.view())?;
        let d: Array1<f64> = self
            .grid
            .event_counts()
            .iter()
            .map(|&c| c as f64)
            .collect();
        // second moment part: Σ_k d_k Σ_i π_ik Z_i Z_iᵀ = Zᵀ diag(a) Z
        let a = state.probs.t().dot(&d);
        let z = self.data.covariates();
        let zs = &z * &a.mapv(f64::sqrt).insert_axis(Axis(1));
        let zbar = state.probs.dot(&z);
        let zbs = &zbar * &d.mapv(f64::sqrt).insert_axis(Axis(1));
        let mut h = zs.t().dot(&zs) - zbs.t().dot(&zbs);
        h /= self.n() as f64;
        // exact symmetry
        for i in 0..p {
            for j in 0..i {
                let v = 0.5 * (h[[i, j]] + h[[j, i]]);
                h[[i, j]] = v;
                h[[j, i]] = v;
            }
        }
        Ok(h)
    }

    pub fn xi_matrix(&self, beta: ArrayView1<'_, f64>) -> Result<XiMatrix> {
        let agg = self.aggregates(beta)?;
        let z = self.data.covariates();
        let mut rows = Array2::zeros((self.n(), self.p()));
        for i in 0..self.n() {
            if self.delta[i] == 0.0 {
                continue;
            }
            let k = self.grid.event_index(i).expect("event subject on grid");
            let mut row = rows.row_mut(i);
            row.assign(&z.row(i));
            row -= &agg.zbar.row(k);
        }
        Ok(XiMatrix { rows })
    }
}

pub(crate) fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(x), Some(y)) => x.iter().zip(y).map(|(u, v)| u * v).sum(),
        _ => a.iter().zip(b).map(|(u, v)| u * v).sum(),
    }
}
