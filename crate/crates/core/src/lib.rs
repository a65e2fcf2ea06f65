//! Estimation and inference for the Fine-Gray proportional subdistribution
//! hazards model when the number of covariates exceeds the sample size.
//!
//! The pipeline is:
//!
//! 1. [`data`]: competing-risks dataset, validation, CSV I/O, standardization.
//! 2. [`censoring`]: Kaplan-Meier estimate of the censoring survival and the
//!    IPCW at-risk weights on the cause-1 event grid.
//! 3. [`pseudolik`]: log pseudo-likelihood, score, negative Hessian and the
//!    per-subject score contributions.
//! 4. [`solver`]: L1-penalized fitting (Fine-Gray and least squares), λ paths
//!    and cross-validation.
//! 5. [`debias`]: nodewise LASSO approximate inverse information and the
//!    one-step bias-corrected estimator.
//! 6. [`inference`]: sandwich variance, confidence intervals, Wald tests.
//! 7. [`simgen`]: simulation designs and the Monte Carlo study harness.

pub mod censoring;
pub mod data;
pub mod debias;
pub mod error;
pub mod inference;
pub mod pipeline;
pub mod pseudolik;
pub mod simgen;
pub mod solver;

pub use censoring::{build_risk_grid, km_censoring, RiskGrid, StepSurvival};
pub use data::{CompetingRisksData, CsvSchema, Standardization, Status, ValidationReport};
pub use debias::{NodewiseFit, NodewiseOptions, OneStepEstimate, ThetaHat};
pub use error::{FgError, Result};
pub use inference::{ContrastInference, InfluenceSet};
pub use pipeline::{Analysis, AnalysisOptions, CoefficientRow, LambdaChoice, LambdaJChoice, LassoFit};
pub use pseudolik::{PseudoLikelihood, RiskAggregates, XiMatrix};
pub use simgen::{Censoring, Setup1Config, Setup2Config, StudyDesign, StudyResult};
pub use solver::{CvResult, FitOptions, PenalizedFit};
