//! Kaplan-Meier estimate of the censoring distribution and the IPCW at-risk
//! weights on the cause-1 event grid.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{CompetingRisksData, Status};
use crate::error::{FgError, Result};

/// Right-continuous, non-increasing step function starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvival {
    pub fn constant_one() -> Self {
        StepSurvival {
            jump_times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_steps(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(FgError::Dimension("jump times vs values".into()));
        }
        if jump_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FgError::InvalidArgument("jump times must increase".into()));
        }
        Ok(StepSurvival { jump_times, values })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the last jump time `<= t`, or 1 before the first jump.
    pub fn eval(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&u| u <= t) {
            0 => 1.0,
            k => self.values[k - 1],
        }
    }
}

/// Product-limit estimator of the censoring survival: censorings are the
/// events, both failure causes are censorings for this curve, and the risk
/// set at `u` is `{i : X_i >= u}`. Ties between a censoring and a failure at
/// the same time therefore keep the failing subject in the risk set.
pub fn km_censoring(data: &CompetingRisksData) -> StepSurvival {
    let times = data.times();
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let n = order.len();
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut pos = 0;
    while pos < n {
        let t = times[order[pos]];
        let at_risk = n - pos;
        let mut end = pos;
        let mut censored = 0usize;
        while end < n && times[order[end]] == t {
            if data.status(order[end]) == Status::Censored {
                censored += 1;
            }
            end += 1;
        }
        if censored > 0 {
            surv *= 1.0 - censored as f64 / at_risk as f64;
            jump_times.push(t);
            values.push(surv);
        }
        pos = end;
    }
    StepSurvival { jump_times, values }
}

/// Cause-1 event grid with the IPCW weights `ω_i(t_k) r_i(t_k) Y_i(t_k)`.
#[derive(Debug, Clone)]
pub struct RiskGrid {
    n: usize,
    event_times: Vec<f64>,
    event_counts: Vec<usize>,
    /// Grid index of each subject's cause-1 event.
    event_index: Vec<Option<usize>>,
    /// K×n, row k holds the weights at `t_k`.
    weights: Array2<f64>,
    /// K×n indicators `r_i(t_k) Y_i(t_k)`.
    at_risk: Array2<bool>,
    censor_times: Vec<f64>,
    censor_counts: Vec<usize>,
    censor_risk: Vec<usize>,
    pi_hat: Vec<f64>,
}

impl RiskGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct cause-1 event times.
    pub fn k(&self) -> usize {
        self.event_times.len()
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    /// Number of cause-1 events at each grid time.
    pub fn event_counts(&self) -> &[usize] {
        &self.event_counts
    }

    pub fn event_index(&self, subject: usize) -> Option<usize> {
        self.event_index[subject]
    }

    /// n×K weight matrix.
    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.t()
    }

    pub fn weights_by_time(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn weight(&self, subject: usize, k: usize) -> f64 {
        self.weights[[k, subject]]
    }

    /// n×K at-risk indicators before weighting.
    pub fn at_risk_flags(&self) -> ArrayView2<'_, bool> {
        self.at_risk.t()
    }

    pub fn censor_times(&self) -> &[f64] {
        &self.censor_times
    }

    /// Number of censorings at each censoring time.
    pub fn censor_counts(&self) -> &[usize] {
        &self.censor_counts
    }

    /// `#{i : X_i >= t}` at each censoring time.
    pub fn censor_risk(&self) -> &[usize] {
        &self.censor_risk
    }

    /// `π̂(t) = n⁻¹ Σ I(X_i >= t)` at each censoring time.
    pub fn pi_hat(&self) -> &[f64] {
        &self.pi_hat
    }
}

/// Builds the weight matrix: one while `t <= X_i`; afterwards zero for
/// censored and cause-1 subjects and `Ĝ(t)/Ĝ(X_i)` for other-cause failures.
pub fn build_risk_grid(data: &CompetingRisksData, g_hat: &StepSurvival) -> Result<RiskGrid> {
    let n = data.n();
    let times = data.times();
    let horizon = data.horizon();

    let mut ev: Vec<f64> = (0..n)
        .filter(|&i| data.status(i) == Status::Cause1 && times[i] <= horizon)
        .map(|i| times[i])
        .collect();
    ev.sort_by(f64::total_cmp);
    let mut event_times: Vec<f64> = Vec::new();
    let mut event_counts: Vec<usize> = Vec::new();
    for t in ev {
        if event_times.last() == Some(&t) {
            *event_counts.last_mut().unwrap() += 1;
        } else {
            event_times.push(t);
            event_counts.push(1);
        }
    }
    let k = event_times.len();

    let mut event_index = vec![None; n];
    let mut weights = Array2::zeros((k, n));
    let mut at_risk = Array2::from_elem((k, n), false);
    for i in 0..n {
        let x = times[i];
        let status = data.status(i);
        if status == Status::Cause1 && x <= horizon {
            event_index[i] = event_times.binary_search_by(|t| t.total_cmp(&x)).ok();
        }
        // grid points with t_k <= X_i
        let last_inside = event_times.partition_point(|&t| t <= x);
        for kk in 0..last_inside {
            weights[[kk, i]] = 1.0;
            at_risk[[kk, i]] = true;
        }
        if status == Status::Other && last_inside < k {
            let g_x = g_hat.eval(x);
            if !(g_x > 0.0) {
                return Err(FgError::DegenerateWeight { subject: i, time: x });
            }
            for kk in last_inside..k {
                weights[[kk, i]] = g_hat.eval(event_times[kk]) / g_x;
                at_risk[[kk, i]] = true;
            }
        }
    }

    let mut cens: Vec<f64> = (0..n)
        .filter(|&i| data.status(i) == Status::Censored)
        .map(|i| times[i])
        .collect();
    cens.sort_by(f64::total_cmp);
    let mut censor_times: Vec<f64> = Vec::new();
    let mut censor_counts: Vec<usize> = Vec::new();
    for t in cens {
        if censor_times.last() == Some(&t) {
            *censor_counts.last_mut().unwrap() += 1;
        } else {
            censor_times.push(t);
            censor_counts.push(1);
        }
    }
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let censor_risk: Vec<usize> = censor_times
        .iter()
        .map(|&t| n - sorted.partition_point(|&x| x < t))
        .collect();
    let pi_hat = censor_risk.iter().map(|&r| r as f64 / n as f64).collect();

    Ok(RiskGrid {
        n,
        event_times,
        event_counts,
        event_index,
        weights,
        at_risk,
        censor_times,
        censor_counts,
        censor_risk,
        pi_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn four() -> CompetingRisksData {
        CompetingRisksData::new(
            array![1.0, 2.0, 3.0, 4.0],
            vec![1, 0, 1, 0],
            array![[0.0], [0.0], [0.0], [0.0]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn no_censoring_gives_constant_one() {
        let d = CompetingRisksData::new(
            array![1.0, 2.0, 3.0],
            vec![1, 2, 1],
            array![[0.0], [0.0], [0.0]],
            None,
        )
        .unwrap();
        let g = km_censoring(&d);
        for t in [0.0, 1.0, 2.5, 10.0] {
            assert_eq!(g.eval(t), 1.0);
        }
    }

    #[test]
    fn hand_product_limit() {
        let g = km_censoring(&four());
        assert_eq!(g.jump_times(), &[2.0, 4.0]);
        assert_eq!(g.eval(0.0), 1.0);
        assert_eq!(g.eval(1.999), 1.0);
        assert_eq!(g.eval(2.0), 1.0 - 1.0 / 3.0);
        assert_eq!(g.eval(3.9), 1.0 - 1.0 / 3.0);
        assert_eq!(g.eval(4.0), 0.0);
        assert_eq!(g.eval(100.0), 0.0);
    }

    #[test]
    fn cause2_weight_follows_ratio() {
        // same KM as `four`, plus an other-cause failure at 2 and later
        // cause-1 events at 3 and 4.5
        let g = km_censoring(&four());
        let d = CompetingRisksData::new(
            array![2.0, 3.0, 4.5],
            vec![2, 1, 1],
            array![[0.0], [0.0], [0.0]],
            None,
        )
        .unwrap();
        let grid = build_risk_grid(&d, &g).unwrap();
        assert_eq!(grid.event_times(), &[3.0, 4.5]);
        assert_eq!(grid.weight(0, 0), 1.0);
        assert_eq!(grid.weight(0, 1), 0.0);
        assert_eq!(grid.weight(1, 0), 1.0);
        assert_eq!(grid.weight(1, 1), 0.0);
        assert_eq!(grid.weight(2, 1), 1.0);
    }

    #[test]
    fn censored_and_cause1_drop_out() {
        let d = CompetingRisksData::new(
            array![1.0, 2.0, 3.0, 4.0],
            vec![1, 0, 1, 1],
            array![[0.0], [0.0], [0.0], [0.0]],
            None,
        )
        .unwrap();
        let grid = build_risk_grid(&d, &km_censoring(&d)).unwrap();
        assert_eq!(grid.event_times(), &[1.0, 3.0, 4.0]);
        // censored subject at 2
        assert_eq!(grid.weight(1, 0), 1.0);
        assert_eq!(grid.weight(1, 1), 0.0);
        assert!(!grid.at_risk_flags()[[1, 1]]);
        // cause-1 subject at 1 is in its own risk set only
        assert_eq!(grid.weight(0, 0), 1.0);
        assert_eq!(grid.weight(0, 1), 0.0);
        assert_eq!(grid.event_index(2), Some(1));
        assert_eq!(grid.censor_times(), &[2.0]);
        assert_eq!(grid.censor_risk(), &[3]);
        assert_eq!(grid.pi_hat(), &[0.75]);
    }

    #[test]
    fn tied_event_stays_in_censoring_risk_set() {
        let d = CompetingRisksData::new(
            array![1.0, 1.0, 2.0],
            vec![1, 0, 1],
            array![[0.0], [0.0], [0.0]],
            None,
        )
        .unwrap();
        let g = km_censoring(&d);
        assert_eq!(g.eval(1.0), 1.0 - 1.0 / 3.0);
    }
}
