use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Censoring, SimDesign, Setup1Config, Setup2Config};
use crate::error::{FgError, Result};
use crate::pipeline::{Analysis, AnalysisOptions};

fn default_reps() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}
fn default_mixture() -> f64 {
    0.6
}
fn default_true() -> bool {
    true
}
fn default_analysis() -> AnalysisOptions {
    AnalysisOptions {
        standardize: false,
        ..AnalysisOptions::default()
    }
}

/// Study configuration, as read from a JSON design file.
///
/// Coefficient indices (`tracked_coefficients`, `beta_overrides` keys) are
/// 1-based. Overrides apply to `β₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyDesign {
    pub setup: u8,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub censoring: Censoring,
    #[serde(default)]
    pub tracked_coefficients: Vec<usize>,
    #[serde(default)]
    pub beta_overrides: BTreeMap<usize, f64>,
    #[serde(default = "default_mixture")]
    pub mixture_p: f64,
    /// Recompute the SE at the one-step estimate. Needs every nodewise row.
    #[serde(default = "default_true")]
    pub two_step: bool,
    #[serde(default = "default_analysis")]
    pub analysis: AnalysisOptions,
}

impl StudyDesign {
    pub fn new(setup: u8, n: usize, p: usize) -> Self {
        StudyDesign {
            setup,
            n,
            p,
            n_reps: default_reps(),
            alpha: default_alpha(),
            seed: default_seed(),
            censoring: Censoring::default(),
            tracked_coefficients: Vec::new(),
            beta_overrides: BTreeMap::new(),
            mixture_p: default_mixture(),
            two_step: true,
            analysis: default_analysis(),
        }
    }

    /// Tracked coefficients (1-based), falling back to the design defaults.
    pub fn tracked(&self) -> Vec<usize> {
        if !self.tracked_coefficients.is_empty() {
            return self.tracked_coefficients.clone();
        }
        match self.setup {
            1 => vec![1, 2, 10],
            _ => (1..=16).chain([30]).collect(),
        }
        .into_iter()
        .filter(|&j| j <= self.p)
        .collect()
    }

    /// The simulation design with overrides applied.
    pub fn sim_design(&self) -> Result<SimDesign> {
        let mut design = match self.setup {
            1 => {
                let mut c = Setup1Config::new(self.n, self.p)?;
                c.mixture_p = self.mixture_p;
                c.censoring = self.censoring;
                c.design()
            }
            2 => {
                let mut c = Setup2Config::new(self.n, self.p)?;
                c.mixture_p = self.mixture_p;
                c.censoring = self.censoring;
                c.design()
            }
            s => return Err(FgError::InvalidArgument(format!("unknown setup {s}"))),
        };
        for (&j, &v) in &self.beta_overrides {
            if j == 0 || j > self.p {
                return Err(FgError::InvalidArgument(format!(
                    "beta override index {j} outside 1..={}",
                    self.p
                )));
            }
            design.events.beta1[j - 1] = v;
        }
        design.check()?;
        Ok(design)
    }

    pub fn check(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(FgError::InvalidArgument("n_reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FgError::InvalidArgument(format!("alpha = {}", self.alpha)));
        }
        if let Some(j) = self.tracked().into_iter().find(|&j| j == 0 || j > self.p) {
            return Err(FgError::InvalidArgument(format!(
                "tracked coefficient {j} outside 1..={}",
                self.p
            )));
        }
        self.sim_design().map(|_| ())
    }
}

/// Outcome of one replicate for the tracked coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub se_corrected: Option<Vec<f64>>,
    pub covered: Vec<bool>,
    pub rejected: Vec<bool>,
    /// Every non-zero `β₁` coordinate rejected at level α.
    pub all_nonzero_rejected: bool,
    /// The true support is contained in the LASSO support.
    pub lasso_support_recovered: bool,
    pub lasso_nonzeros: usize,
    pub lambda_interior: bool,
    pub lasso_converged: bool,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: String,
}

/// Aggregate over replicates for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    /// 1-based coefficient index.
    pub coefficient: usize,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    pub mean_se: f64,
    pub mean_se_corrected: Option<f64>,
    /// Coverage of the interval built from the corrected SE when available.
    pub coverage: f64,
    /// Rejection rate of `H₀: β = 0` with the uncorrected SE.
    pub rejection_rate: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub design: StudyDesign,
    /// Resolved censoring (target rates replaced by the calibrated bound).
    pub censoring: Censoring,
    pub rows: Vec<CoefficientSummary>,
    pub replicates_requested: usize,
    pub replicates_completed: usize,
    pub failures: Vec<ReplicateFailure>,
    pub all_nonzero_rejected_rate: f64,
    pub lasso_support_recovery_rate: f64,
    pub lambda_interior_rate: f64,
    pub mean_censored_fraction: f64,
    pub records: Vec<ReplicateRecord>,
    pub runtime_secs: f64,
}

impl StudyResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "coefficient",
            "true_value",
            "mean_estimate",
            "sd_estimate",
            "mean_se",
            "mean_se_corrected",
            "coverage",
            "rejection_rate",
            "replicates",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.coefficient.to_string(),
                r.true_value.to_string(),
                r.mean_estimate.to_string(),
                r.sd_estimate.to_string(),
                r.mean_se.to_string(),
                r.mean_se_corrected.map(|v| v.to_string()).unwrap_or_default(),
                r.coverage.to_string(),
                r.rejection_rate.to_string(),
                r.replicates.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn row(&self, coefficient: usize) -> Option<&CoefficientSummary> {
        self.rows.iter().find(|r| r.coefficient == coefficient)
    }
}

fn csv_err(e: csv::Error) -> FgError {
    FgError::Csv {
        row: 0,
        column: String::new(),
        message: e.to_string(),
    }
}

fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn run_replicate(
    design: &StudyDesign,
    sim: &SimDesign,
    tracked: &[usize],
    rep: usize,
) -> Result<ReplicateRecord> {
    let data = sim.generate_with(&mut replicate_rng(design.seed, rep))?;
    let beta1 = &sim.events.beta1;
    let nonzero: Vec<usize> = (0..sim.p).filter(|&j| beta1[j] != 0.0).collect();

    let mut opts = design.analysis.clone();
    opts.seed = design.seed.wrapping_mul(0x9e37_79b9).wrapping_add(rep as u64);
    opts.nodewise.seed = opts.seed;
    opts.two_step = design.two_step;
    opts.rows = if design.two_step {
        None
    } else {
        let mut rows: Vec<usize> = tracked.iter().map(|j| j - 1).chain(nonzero.iter().copied()).collect();
        rows.sort_unstable();
        rows.dedup();
        Some(rows)
    };
    let analysis = Analysis::run(&data, &opts)?;

    let mut record = ReplicateRecord {
        replicate: rep,
        estimate: Vec::with_capacity(tracked.len()),
        se: Vec::with_capacity(tracked.len()),
        se_corrected: design.two_step.then(Vec::new),
        covered: Vec::with_capacity(tracked.len()),
        rejected: Vec::with_capacity(tracked.len()),
        all_nonzero_rejected: true,
        lasso_support_recovered: true,
        lasso_nonzeros: analysis.fit.support().len(),
        lambda_interior: analysis.cv.as_ref().is_some_and(|cv| cv.min_is_interior()),
        lasso_converged: analysis.fit.converged,
        censored_fraction: data.status_codes().iter().filter(|&&s| s == 0).count() as f64
            / data.n() as f64,
    };
    for &j in tracked {
        let row = analysis.coefficient(j - 1, design.alpha, 0.0)?;
        let truth = beta1[j - 1];
        record.estimate.push(row.estimate);
        record.se.push(row.se);
        if let (Some(v), Some(s)) = (record.se_corrected.as_mut(), row.se_corrected) {
            v.push(s);
        }
        record.covered.push(row.ci_lo <= truth && truth <= row.ci_hi);
        record.rejected.push(row.p_value < design.alpha);
    }
    let lasso = analysis.lasso_original();
    for &j in &nonzero {
        if lasso[j] == 0.0 {
            record.lasso_support_recovered = false;
        }
        if analysis.coefficient(j, design.alpha, 0.0)?.p_value >= design.alpha {
            record.all_nonzero_rejected = false;
        }
    }
    Ok(record)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

fn rate(v: impl Iterator<Item = bool>) -> f64 {
    mean(v.map(|b| if b { 1.0 } else { 0.0 }))
}

/// Runs the Monte Carlo study. Replicates run in parallel on independent
/// RNG streams; aggregation follows replicate order, so the result does not
/// depend on the thread count.
pub fn run_study(design: &StudyDesign) -> Result<StudyResult> {
    let start = Instant::now();
    design.check()?;
    let sim = design.sim_design()?.resolve_censoring()?;
    let tracked = design.tracked();

    let outcomes: Vec<Result<ReplicateRecord>> = (0..design.n_reps)
        .into_par_iter()
        .map(|rep| run_replicate(design, &sim, &tracked, rep))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("replicate {rep} failed: {e}");
                failures.push(ReplicateFailure {
                    replicate: rep,
                    error: e.to_string(),
                });
            }
        }
    }

    let rows = tracked
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let est: Vec<f64> = records.iter().map(|r| r.estimate[k]).collect();
            let m = mean(est.iter().copied());
            let sd = if est.len() > 1 {
                (est.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            CoefficientSummary {
                coefficient: j,
                true_value: sim.events.beta1[j - 1],
                mean_estimate: m,
                sd_estimate: sd,
                mean_se: mean(records.iter().map(|r| r.se[k])),
                mean_se_corrected: design
                    .two_step
                    .then(|| mean(records.iter().filter_map(|r| r.se_corrected.as_ref().map(|v| v[k])))),
                coverage: rate(records.iter().map(|r| r.covered[k])),
                rejection_rate: rate(records.iter().map(|r| r.rejected[k])),
                replicates: records.len(),
            }
        })
        .collect();

    Ok(StudyResult {
        design: design.clone(),
        censoring: sim.censoring,
        rows,
        replicates_requested: design.n_reps,
        replicates_completed: records.len(),
        failures,
        all_nonzero_rejected_rate: rate(records.iter().map(|r| r.all_nonzero_rejected)),
        lasso_support_recovery_rate: rate(records.iter().map(|r| r.lasso_support_recovered)),
        lambda_interior_rate: rate(records.iter().map(|r| r.lambda_interior)),
        mean_censored_fraction: mean(records.iter().map(|r| r.censored_fraction)),
        records,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// One point of a power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub beta_value: f64,
    pub rejection_rate: f64,
    /// Binomial Monte Carlo SE of the rejection rate.
    pub mc_se: f64,
    pub replicates: usize,
}

/// Parses `lo:hi:step` into the inclusive grid `lo, lo + step, …`.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || FgError::InvalidArgument(format!("power sweep `{spec}` is not lo:hi:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

/// Rejection rate of `H₀: β₁,j = 0` as `β₁,j` runs over `values`, where `j`
/// is the first tracked coefficient (default 1). Only the swept row is
/// debiased and the test uses the uncorrected SE.
pub fn power_sweep(design: &StudyDesign, values: &[f64]) -> Result<Vec<PowerPoint>> {
    let j = design.tracked_coefficients.first().copied().unwrap_or(1);
    values
        .iter()
        .map(|&v| {
            let mut d = design.clone();
            d.tracked_coefficients = vec![j];
            d.beta_overrides.insert(j, v);
            d.two_step = false;
            let res = run_study(&d)?;
            let row = &res.rows[0];
            let r = row.rejection_rate;
            let k = row.replicates as f64;
            Ok(PowerPoint {
                beta_value: v,
                rejection_rate: r,
                mc_se: (r * (1.0 - r) / k).sqrt(),
                replicates: row.replicates,
            })
        })
        .collect()
}

pub fn write_power_csv<W: Write>(points: &[PowerPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["beta_value", "rejection_rate", "mc_se"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.beta_value.to_string(), p.rejection_rate.to_string(), p.mc_se.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid() {
        let v = parse_sweep("0:0.6:0.2").unwrap();
        assert_eq!(v.len(), 4);
        assert!((v[3] - 0.6).abs() < 1e-12);
        assert!(parse_sweep("1:0:0.1").is_err());
        assert!(parse_sweep("0:1").is_err());
        assert!(parse_sweep("0:1:0").is_err());
    }

    #[test]
    fn design_json_defaults() {
        let d: StudyDesign = serde_json::from_str(r#"{"setup":1,"n":50,"p":10}"#).unwrap();
        assert_eq!(d.n_reps, 100);
        assert_eq!(d.tracked(), vec![1, 2, 10]);
        assert_eq!(d.censoring, Censoring::TargetRate { rate: 0.3 });
        assert!(!d.analysis.standardize);
        let d: StudyDesign = serde_json::from_str(
            r#"{"setup":2,"n":50,"p":20,"beta_overrides":{"3":0.1},
                "censoring":{"kind":"uniform","upper":2.0}}"#,
        )
        .unwrap();
        assert_eq!(d.sim_design().unwrap().events.beta1[2], 0.1);
        assert_eq!(d.tracked(), (1..=16).collect::<Vec<_>>());
    }

    #[test]
    fn bad_designs() {
        let mut d = StudyDesign::new(3, 50, 10);
        assert!(d.check().is_err());
        d.setup = 1;
        d.tracked_coefficients = vec![11];
        assert!(d.check().is_err());
        d.tracked_coefficients = vec![];
        d.beta_overrides.insert(0, 1.0);
        assert!(d.check().is_err());
    }
}
