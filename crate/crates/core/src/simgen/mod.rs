//! Simulation designs and the Monte Carlo study harness.
//!
//! Both designs share the event mechanism: cause 1 occurs with probability
//! `1 − (1 − p)^{exp(β₁ᵀZ)}` and its time is drawn from the conditional
//! cumulative incidence `1 − [1 − p(1 − e^{−t})]^{exp(β₁ᵀZ)}`; otherwise the
//! event is cause 2 with an exponential time of rate `exp(β₂ᵀZ)`.

mod study;

use ndarray::Array2;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::CompetingRisksData;
use crate::error::{FgError, Result};

pub use study::{
    parse_sweep, power_sweep, run_study, CoefficientSummary, PowerPoint, ReplicateFailure,
    ReplicateRecord, StudyDesign, StudyResult, write_power_csv,
};

/// Censoring mechanism, drawn independently of the event process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Censoring {
    None,
    /// `C ~ U(0, upper)`.
    Uniform { upper: f64 },
    Exponential { rate: f64 },
    /// Uniform censoring with `upper` chosen so that the expected fraction
    /// of censored subjects equals `rate`.
    TargetRate { rate: f64 },
}

impl Default for Censoring {
    fn default() -> Self {
        Censoring::TargetRate { rate: 0.3 }
    }
}

impl Censoring {
    fn check(&self) -> Result<()> {
        let ok = match *self {
            Censoring::None => true,
            Censoring::Uniform { upper } => upper > 0.0 && upper.is_finite(),
            Censoring::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Censoring::TargetRate { rate } => rate > 0.0 && rate < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(FgError::InvalidArgument(format!("invalid censoring {self:?}")))
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Censoring::None => f64::INFINITY,
            Censoring::Uniform { upper } => upper * rng.sample::<f64, _>(Open01),
            Censoring::Exponential { rate } => rng.sample::<f64, _>(Exp1) / rate,
            Censoring::TargetRate { .. } => unreachable!("resolved before drawing"),
        }
    }
}

/// `P(ε = 1 | Z) = 1 − (1 − p)^{exp(lp)}` with `lp = β₁ᵀZ`.
pub fn cause1_probability(mixture_p: f64, lp: f64) -> f64 {
    -(lp.exp() * (-mixture_p).ln_1p()).exp_m1()
}

/// Conditional cumulative incidence of cause 1 at `t`.
pub fn cause1_cif(mixture_p: f64, lp: f64, t: f64) -> f64 {
    let inner = -mixture_p * (-t).exp_m1();
    -(lp.exp() * (-inner).ln_1p()).exp_m1()
}

/// Cause-1 time solving `cause1_cif(t) = v · cause1_probability`, `v ∈ (0,1)`.
pub fn cause1_time(mixture_p: f64, lp: f64, v: f64) -> f64 {
    let target = v * cause1_probability(mixture_p, lp);
    // [1 − p(1 − e^{−t})] = (1 − target)^{exp(−lp)}
    let x = -((-target).ln_1p() * (-lp).exp()).exp_m1();
    -(-x / mixture_p).ln_1p()
}

/// Coefficients and mixture parameter shared by both designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventModel {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub mixture_p: f64,
}

impl EventModel {
    fn check(&self, p: usize) -> Result<()> {
        if self.beta1.len() != p || self.beta2.len() != p {
            return Err(FgError::Dimension(format!(
                "beta1 has length {}, beta2 {}, expected {p}",
                self.beta1.len(),
                self.beta2.len()
            )));
        }
        if !(self.mixture_p > 0.0 && self.mixture_p < 1.0) {
            return Err(FgError::InvalidArgument(format!(
                "mixture_p = {} must lie in (0, 1)",
                self.mixture_p
            )));
        }
        Ok(())
    }

    /// Event time and cause for covariates `z`.
    fn draw<R: Rng>(&self, z: &[f64], rng: &mut R) -> (f64, u8) {
        let lp1: f64 = z.iter().zip(&self.beta1).map(|(a, b)| a * b).sum();
        let p1 = cause1_probability(self.mixture_p, lp1);
        let u: f64 = rng.sample(Open01);
        if u < p1 {
            (cause1_time(self.mixture_p, lp1, u / p1), 1)
        } else {
            let lp2: f64 = z.iter().zip(&self.beta2).map(|(a, b)| a * b).sum();
            let e: f64 = rng.sample(Exp1);
            ((e * (-lp2).exp()).max(f64::MIN_POSITIVE), 2)
        }
    }
}

/// Covariate distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateDesign {
    /// i.i.d. standard normal.
    Independent,
    /// Consecutive exchangeable blocks; columns after the last block are
    /// independent.
    Blocks {
        sizes: Vec<usize>,
        correlations: Vec<f64>,
    },
}

impl CovariateDesign {
    fn check(&self, p: usize) -> Result<()> {
        if let CovariateDesign::Blocks {
            sizes,
            correlations,
        } = self
        {
            if sizes.len() != correlations.len() {
                return Err(FgError::InvalidArgument(
                    "one correlation per block is required".into(),
                ));
            }
            if sizes.iter().sum::<usize>() > p {
                return Err(FgError::InvalidArgument(format!(
                    "blocks cover {} columns but p = {p}",
                    sizes.iter().sum::<usize>()
                )));
            }
            if let Some(r) = correlations.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
                return Err(FgError::InvalidArgument(format!(
                    "block correlation {r} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    fn draw_into<R: Rng>(&self, row: &mut [f64], rng: &mut R) {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if let CovariateDesign::Blocks {
            sizes,
            correlations,
        } = self
        {
            let mut start = 0;
            for (&size, &rho) in sizes.iter().zip(correlations) {
                if rho > 0.0 {
                    let shared: f64 = rng.sample::<f64, _>(StandardNormal) * rho.sqrt();
                    let own = (1.0 - rho).sqrt();
                    for v in &mut row[start..start + size] {
                        *v = shared + own * *v;
                    }
                }
                start += size;
            }
        }
    }
}

/// A complete simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub covariates: CovariateDesign,
    pub events: EventModel,
    pub censoring: Censoring,
}

const PILOT_SIZE: usize = 20_000;
const PILOT_SEED: u64 = 0x00c0_ffee;

impl SimDesign {
    pub fn check(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(FgError::InvalidArgument("n and p must be at least 1".into()));
        }
        self.covariates.check(self.p)?;
        self.events.check(self.p)?;
        self.censoring.check()
    }

    /// Replaces a target censoring rate by the calibrated uniform upper bound.
    pub fn resolve_censoring(&self) -> Result<SimDesign> {
        self.check()?;
        let censoring = match self.censoring {
            Censoring::TargetRate { rate } => Censoring::Uniform {
                upper: self.calibrate_uniform(rate),
            },
            other => other,
        };
        Ok(SimDesign {
            censoring,
            ..self.clone()
        })
    }

    /// Upper bound `c` of `U(0, c)` censoring whose expected censored
    /// fraction on a fixed pilot sample equals `rate`.
    pub fn calibrate_uniform(&self, rate: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(PILOT_SEED);
        let mut z = vec![0.0; self.p];
        let times: Vec<f64> = (0..PILOT_SIZE)
            .map(|_| {
                self.covariates.draw_into(&mut z, &mut rng);
                self.events.draw(&z, &mut rng).0
            })
            .collect();
        // P(C < T) = min(T / c, 1) for C ~ U(0, c); decreasing in c
        let censored = |c: f64| times.iter().map(|&t| (t / c).min(1.0)).sum::<f64>() / times.len() as f64;
        let (mut lo, mut hi) = (1e-12_f64, 1e12_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if censored(mid) > rate {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-12 {
                break;
            }
        }
        (lo * hi).sqrt()
    }

    /// Draws one dataset. `TargetRate` censoring must be resolved first.
    pub fn generate_with<R: Rng>(&self, rng: &mut R) -> Result<CompetingRisksData> {
        self.check()?;
        if matches!(self.censoring, Censoring::TargetRate { .. }) {
            return Err(FgError::InvalidArgument(
                "resolve the target censoring rate before generating".into(),
            ));
        }
        let mut z = Array2::zeros((self.n, self.p));
        let mut times = Vec::with_capacity(self.n);
        let mut status = Vec::with_capacity(self.n);
        for mut row in z.rows_mut() {
            let row = row.as_slice_mut().expect("standard layout");
            self.covariates.draw_into(row, rng);
            let (t, cause) = self.events.draw(row, rng);
            let c = self.censoring.draw(rng);
            if t <= c {
                times.push(t);
                status.push(cause);
            } else {
                times.push(c);
                status.push(0);
            }
        }
        let names = (1..=self.p).map(|j| format!("z{j}")).collect();
        CompetingRisksData::new(times.into(), status, z, None)?.with_names(names)
    }

    pub fn generate(&self, seed: u64) -> Result<CompetingRisksData> {
        let design = self.resolve_censoring()?;
        design.generate_with(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Independent standard normal covariates; `β₁,₁ = β₁,₂ = 0.5`, the rest of
/// `β₁` zero; `β₂` alternates −0.5, 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup1Config {
    pub n: usize,
    pub p: usize,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub mixture_p: f64,
    pub censoring: Censoring,
    pub seed: u64,
}

impl Setup1Config {
    /// Default coefficients. The alternating `β₂` is defined for even `p`
    /// only; use [`Setup1Config::with_betas`] otherwise.
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p % 2 != 0 {
            return Err(FgError::InvalidArgument(format!(
                "default beta2 needs an even p (got {p}); pass beta2 explicitly"
            )));
        }
        let mut beta1 = vec![0.0; p];
        beta1[..2.min(p)].fill(0.5);
        let beta2 = (0..p).map(|j| if j % 2 == 0 { -0.5 } else { 0.5 }).collect();
        Ok(Self::with_betas(n, beta1, beta2))
    }

    pub fn with_betas(n: usize, beta1: Vec<f64>, beta2: Vec<f64>) -> Self {
        Setup1Config {
            n,
            p: beta1.len(),
            beta1,
            beta2,
            mixture_p: 0.6,
            censoring: Censoring::default(),
            seed: 1,
        }
    }

    pub fn design(&self) -> SimDesign {
        SimDesign {
            n: self.n,
            p: self.p,
            covariates: CovariateDesign::Independent,
            events: EventModel {
                beta1: self.beta1.clone(),
                beta2: self.beta2.clone(),
                mixture_p: self.mixture_p,
            },
            censoring: self.censoring,
        }
    }
}

/// Block-correlated covariates (blocks of 4, 4, 8 with correlations 0.5,
/// 0.35, 0.05, the rest independent); `β₁` is 0.5 on coordinates 1–8 and
/// −0.5 on 9–12; `β₂` is 0.5 on 1–4 and 13–16 and −0.5 on 5–8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup2Config {
    pub n: usize,
    pub p: usize,
    pub block_sizes: Vec<usize>,
    pub block_correlations: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub mixture_p: f64,
    pub censoring: Censoring,
    pub seed: u64,
}

impl Setup2Config {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p < 16 {
            return Err(FgError::InvalidArgument(format!("setup 2 needs p >= 16 (got {p})")));
        }
        let mut beta1 = vec![0.0; p];
        beta1[..8].fill(0.5);
        beta1[8..12].fill(-0.5);
        let mut beta2 = vec![0.0; p];
        beta2[..4].fill(0.5);
        beta2[4..8].fill(-0.5);
        beta2[12..16].fill(0.5);
        Ok(Setup2Config {
            n,
            p,
            block_sizes: vec![4, 4, 8],
            block_correlations: vec![0.5, 0.35, 0.05],
            beta1,
            beta2,
            mixture_p: 0.6,
            censoring: Censoring::default(),
            seed: 1,
        })
    }

    pub fn design(&self) -> SimDesign {
        SimDesign {
            n: self.n,
            p: self.p,
            covariates: CovariateDesign::Blocks {
                sizes: self.block_sizes.clone(),
                correlations: self.block_correlations.clone(),
            },
            events: EventModel {
                beta1: self.beta1.clone(),
                beta2: self.beta2.clone(),
                mixture_p: self.mixture_p,
            },
            censoring: self.censoring,
        }
    }
}

pub fn gen_setup1(cfg: &Setup1Config) -> Result<CompetingRisksData> {
    cfg.design().generate(cfg.seed)
}

pub fn gen_setup2(cfg: &Setup2Config) -> Result<CompetingRisksData> {
    cfg.design().generate(cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_cause1_probability_is_mixture() {
        assert!((cause1_probability(0.6, 0.0) - 0.6).abs() < 1e-15);
        assert!((cause1_probability(0.3, 2f64.ln()) - 0.51).abs() < 1e-14);
    }

    #[test]
    fn inversion_hits_target() {
        for &(lp, v) in &[(0.0, 0.3), (1.2, 0.9), (-2.0, 0.01), (0.4, 0.5)] {
            let t = cause1_time(0.6, lp, v);
            let want = v * cause1_probability(0.6, lp);
            assert!((cause1_cif(0.6, lp, t) - want).abs() < 1e-13, "lp {lp} v {v}");
            assert!(t > 0.0);
        }
    }

    #[test]
    fn setup_defaults() {
        let s1 = Setup1Config::new(10, 6).unwrap();
        assert_eq!(s1.beta1, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s1.beta2, vec![-0.5, 0.5, -0.5, 0.5, -0.5, 0.5]);
        assert!(Setup1Config::new(10, 5).is_err());
        let s2 = Setup2Config::new(10, 20).unwrap();
        assert_eq!(&s2.beta1[6..14], &[0.5, 0.5, -0.5, -0.5, -0.5, -0.5, 0.0, 0.0]);
        assert_eq!(&s2.beta2[..], &[
            0.5, 0.5, 0.5, 0.5, -0.5, -0.5, -0.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5,
            0.0, 0.0, 0.0, 0.0
        ]);
    }

    #[test]
    fn unresolved_target_rate_is_refused() {
        let d = Setup1Config::new(5, 2).unwrap().design();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(d.generate_with(&mut rng).is_err());
        assert!(d.generate(0).is_ok());
    }

    #[test]
    fn no_censoring_gives_no_zero_status() {
        let mut cfg = Setup1Config::new(200, 4).unwrap();
        cfg.censoring = Censoring::None;
        let d = gen_setup1(&cfg).unwrap();
        assert!(d.status_codes().iter().all(|&s| s != 0));
        assert!(d.times().iter().all(|&t| t > 0.0));
    }
}
