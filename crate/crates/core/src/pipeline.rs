//! End-to-end analysis: penalized fit, nodewise `Θ̂`, one-step estimate and
//! sandwich inference, with results reported on the original covariate scale.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::censoring::{build_risk_grid, km_censoring};
use crate::data::{standardize, CompetingRisksData, ConstantColumns, Standardization};
use crate::debias::{one_step, theta_hat_with, NodewiseOptions, NodewisePenalty, OneStepEstimate, ThetaHat};
use crate::error::{FgError, Result};
use crate::inference::{self, ContrastInference, InfluenceSet};
use crate::pseudolik::PseudoLikelihood;
use crate::solver::{cross_validate, fit_fine_gray_lasso, fit_path, lambda_path, CvResult, FitOptions, PenalizedFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Cv,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaJChoice {
    Cv,
    Shared(f64),
}

impl From<LambdaJChoice> for NodewisePenalty {
    fn from(c: LambdaJChoice) -> Self {
        match c {
            LambdaJChoice::Cv => NodewisePenalty::CrossValidated,
            LambdaJChoice::Shared(v) => NodewisePenalty::Shared(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub lambda: LambdaChoice,
    pub lambda_j: LambdaJChoice,
    pub folds: usize,
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub seed: u64,
    pub standardize: bool,
    pub drop_constant: bool,
    pub fit: FitOptions,
    pub nodewise: NodewiseOptions,
    /// Coefficients to debias (0-based); all when `None`.
    pub rows: Option<Vec<usize>>,
    /// Recompute the sandwich at `b̂`. Needs every row.
    pub two_step: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            lambda: LambdaChoice::Cv,
            lambda_j: LambdaJChoice::Cv,
            folds: 10,
            n_lambdas: 50,
            lambda_min_ratio: 0.02,
            seed: 0,
            standardize: true,
            drop_constant: false,
            fit: FitOptions::default(),
            nodewise: NodewiseOptions::default(),
            rows: None,
            two_step: true,
        }
    }
}

/// Per-coefficient inference on the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub index: usize,
    pub name: String,
    pub lasso: f64,
    pub estimate: f64,
    pub se: f64,
    pub se_corrected: Option<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub standardization: Standardization,
    pub names: Vec<String>,
    pub n: usize,
    pub cv: Option<CvResult>,
    /// Fit on the working (possibly standardized) scale.
    pub fit: PenalizedFit,
    pub theta: ThetaHat,
    pub one_step: OneStepEstimate,
    pub influence: InfluenceSet,
    pub influence_corrected: Option<InfluenceSet>,
}

/// The penalized fit alone, before debiasing.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub standardization: Standardization,
    pub cv: Option<CvResult>,
    /// Fit on the working (possibly standardized) scale.
    pub fit: PenalizedFit,
}

impl LassoFit {
    pub fn coefficients_original(&self) -> Array1<f64> {
        self.standardization.to_original(self.fit.beta.view())
    }
}

/// Standardizes (if requested) and validates the working dataset.
pub fn prepare(
    data: &CompetingRisksData,
    opts: &AnalysisOptions,
) -> Result<(CompetingRisksData, Standardization)> {
    data.ensure_fit_ready()?;
    if opts.standardize {
        let mode = if opts.drop_constant {
            ConstantColumns::Drop
        } else {
            ConstantColumns::Reject
        };
        standardize(data, mode)
    } else {
        Ok((data.clone(), identity_scale(data.p())))
    }
}

fn fit_working(lik: &PseudoLikelihood<'_>, opts: &AnalysisOptions) -> Result<(Option<CvResult>, PenalizedFit)> {
    let (cv, lambdas) = match opts.lambda {
        LambdaChoice::Cv => {
            let path = lambda_path(lik, opts.n_lambdas, opts.lambda_min_ratio)?;
            let cv = cross_validate(lik.data(), &path, opts.folds, opts.seed, &opts.fit)?;
            let upto = path[..=cv.index_min].to_vec();
            (Some(cv), upto)
        }
        LambdaChoice::Value(v) => (None, vec![v]),
    };
    let target = *lambdas.last().expect("non-empty path");
    let mut fit = fit_path(lik, &lambdas, &opts.fit)?
        .pop()
        .expect("non-empty path");
    if fit.lambda != target {
        fit = fit_fine_gray_lasso(lik, target, Some(fit.beta.view()), &opts.fit)?;
    }
    log::info!(
        "lasso: lambda {:.4e}, {} nonzero, kkt {:.2e}",
        fit.lambda,
        fit.support().len(),
        fit.kkt_residual
    );
    Ok((cv, fit))
}

/// Penalized fit with λ fixed or chosen by cross-validation.
pub fn fit_lasso(data: &CompetingRisksData, opts: &AnalysisOptions) -> Result<LassoFit> {
    let (work, standardization) = prepare(data, opts)?;
    let grid = build_risk_grid(&work, &km_censoring(&work))?;
    let lik = PseudoLikelihood::new(&work, &grid)?;
    let (cv, fit) = fit_working(&lik, opts)?;
    Ok(LassoFit {
        standardization,
        cv,
        fit,
    })
}

impl Analysis {
    pub fn run(data: &CompetingRisksData, opts: &AnalysisOptions) -> Result<Analysis> {
        let (work, standardization) = prepare(data, opts)?;
        let rows = match &opts.rows {
            Some(r) => Some(working_rows(r, &standardization)?),
            None => None,
        };
        let grid = build_risk_grid(&work, &km_censoring(&work))?;
        let lik = PseudoLikelihood::new(&work, &grid)?;
        let (cv, fit) = fit_working(&lik, opts)?;

        let xi = lik.xi_matrix(fit.beta.view())?;
        let theta = theta_hat_with(&xi, rows.as_deref(), opts.lambda_j.into(), &opts.nodewise)?;
        let score = lik.score(fit.beta.view())?;
        let one_step = one_step(fit.beta.view(), &theta, score.view())?;
        let influence = inference::influence(&lik, fit.beta.view())?;
        let influence_corrected = if opts.two_step {
            match one_step.full() {
                Some(b) => Some(inference::influence(&lik, b.view())?),
                None => {
                    log::warn!("two-step SE skipped: not every coefficient was debiased");
                    None
                }
            }
        } else {
            None
        };

        Ok(Analysis {
            standardization,
            names: data.names().to_vec(),
            n: work.n(),
            cv,
            fit,
            theta,
            one_step,
            influence,
            influence_corrected,
        })
    }

    /// Number of original covariates.
    pub fn p(&self) -> usize {
        self.names.len()
    }

    /// LASSO estimate on the original scale.
    pub fn lasso_original(&self) -> Array1<f64> {
        self.standardization.to_original(self.fit.beta.view())
    }

    /// Maps an original-scale contrast to the working scale.
    fn working_contrast(&self, c: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if c.len() != self.p() {
            return Err(FgError::Dimension(format!(
                "contrast has length {}, expected {}",
                c.len(),
                self.p()
            )));
        }
        if let Some(&j) = self.standardization.dropped.iter().find(|&&j| c[j] != 0.0) {
            return Err(FgError::InvalidArgument(format!(
                "contrast loads on dropped constant column {j}"
            )));
        }
        Ok(self
            .standardization
            .kept
            .iter()
            .zip(&self.standardization.scales)
            .map(|(&j, &s)| c[j] / s)
            .collect())
    }

    /// Inference for `cᵀβ` on the original scale. The contrast is scaled to
    /// unit L1 norm and `theta0` refers to the scaled contrast.
    pub fn contrast(&self, c: ArrayView1<'_, f64>, alpha: f64, theta0: f64) -> Result<ContrastInference> {
        let l1: f64 = c.iter().map(|x| x.abs()).sum();
        if !(l1 > 0.0 && l1.is_finite()) {
            return Err(FgError::InvalidArgument("contrast must be non-zero and finite".into()));
        }
        let normalized = c.mapv(|x| x / l1);
        let w = self.working_contrast(normalized.view())?;
        let mut estimate = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                let bj = self.one_step.get(j).ok_or_else(|| {
                    FgError::InvalidArgument(format!("coefficient {j} was not debiased"))
                })?;
                estimate += wj * bj;
            }
        }
        let v = self.theta.transpose_times(w.view())?;
        let var = self.influence.quadratic_form(v.view());
        if !(var > 0.0) {
            return Err(FgError::NonPositiveVariance(var));
        }
        let mut out = inference::from_parts(normalized, estimate, var, self.n, alpha, theta0);
        if let Some(corr) = &self.influence_corrected {
            let var_c = corr.quadratic_form(v.view());
            if !(var_c > 0.0) {
                return Err(FgError::NonPositiveVariance(var_c));
            }
            out = out.with_corrected_se((var_c / self.n as f64).sqrt());
        }
        Ok(out)
    }

    /// Inference for a single coefficient (0-based original index).
    pub fn coefficient(&self, j: usize, alpha: f64, theta0: f64) -> Result<CoefficientRow> {
        let mut c = Array1::zeros(self.p());
        c[j] = 1.0;
        let r = self.contrast(c.view(), alpha, theta0)?;
        Ok(CoefficientRow {
            index: j,
            name: self.names[j].clone(),
            lasso: self.lasso_original()[j],
            estimate: r.estimate,
            se: r.se,
            se_corrected: r.se_corrected,
            ci_lo: r.ci.0,
            ci_hi: r.ci.1,
            z: r.z,
            p_value: r.p_value,
        })
    }

    /// Original indices of the debiased coefficients.
    pub fn debiased_indices(&self) -> Vec<usize> {
        self.theta
            .rows()
            .iter()
            .map(|&k| self.standardization.kept[k])
            .collect()
    }

    pub fn coefficients(&self, alpha: f64) -> Result<Vec<CoefficientRow>> {
        self.debiased_indices()
            .into_iter()
            .map(|j| self.coefficient(j, alpha, 0.0))
            .collect()
    }
}

fn identity_scale(p: usize) -> Standardization {
    Standardization {
        kept: (0..p).collect(),
        dropped: Vec::new(),
        means: vec![0.0; p],
        scales: vec![1.0; p],
        applied: false,
    }
}

fn working_rows(rows: &[usize], s: &Standardization) -> Result<Vec<usize>> {
    rows.iter()
        .map(|&j| {
            s.kept.iter().position(|&k| k == j).ok_or_else(|| {
                FgError::InvalidArgument(format!("coefficient {j} is out of range or was dropped"))
            })
        })
        .collect()
}
