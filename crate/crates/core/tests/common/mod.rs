//! Random instances and brute-force reference implementations.
#![allow(dead_code)]

use fgray::CompetingRisksData;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// How much censoring a random instance gets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CensorLevel {
    None,
    Moderate,
    Heavy,
}

/// Small random dataset: exponential latent times, random cause, covariates
/// N(0, 1), optional ties from rounding. Retries until there is at least one
/// cause-1 event.
pub fn random_instance(seed: u64, n: usize, p: usize, level: CensorLevel, ties: bool) -> CompetingRisksData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let z = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let mut times = Array1::zeros(n);
        let mut status = vec![0u8; n];
        for i in 0..n {
            let t: f64 = Exp1.sample(&mut rng);
            let cause = if rng.random::<f64>() < 0.55 { 1 } else { 2 };
            let c: f64 = match level {
                CensorLevel::None => f64::INFINITY,
                CensorLevel::Moderate => 2.5 * rng.random::<f64>(),
                CensorLevel::Heavy => 0.4 * rng.random::<f64>(),
            };
            let (x, s) = if t <= c { (t, cause) } else { (c, 0) };
            times[i] = if ties { ((x * 8.0_f64).ceil() / 8.0).max(0.125) } else { x };
            status[i] = s;
        }
        if status.iter().filter(|&&s| s == 1).count() < 2 {
            continue;
        }
        if let Ok(d) = CompetingRisksData::new(times, status, z, None) {
            return d;
        }
    }
}

/// Brute-force product-limit estimate of the censoring survival, evaluated
/// at each distinct censoring time in increasing order.
pub fn km_brute(times: &[f64], status: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let mut cens: Vec<f64> = times
        .iter()
        .zip(status)
        .filter(|(_, &s)| s == 0)
        .map(|(&t, _)| t)
        .collect();
    cens.sort_by(f64::total_cmp);
    cens.dedup();
    let mut values = Vec::new();
    for &u in &cens {
        let mut g = 1.0;
        for &s in cens.iter().filter(|&&s| s <= u) {
            let at_risk = times.iter().filter(|&&x| x >= s).count();
            let events = times
                .iter()
                .zip(status)
                .filter(|(&x, &st)| x == s && st == 0)
                .count();
            g *= 1.0 - events as f64 / at_risk as f64;
        }
        values.push(g);
    }
    (cens, values)
}

/// Censoring survival at `t` from brute-force steps.
pub fn g_at(steps: &(Vec<f64>, Vec<f64>), t: f64) -> f64 {
    let mut g = 1.0;
    for (&u, &v) in steps.0.iter().zip(&steps.1) {
        if u <= t {
            g = v;
        }
    }
    g
}

/// IPCW at-risk weight of subject `i` at time `t`.
pub fn weight(data: &CompetingRisksData, steps: &(Vec<f64>, Vec<f64>), i: usize, t: f64) -> f64 {
    let x = data.times()[i];
    if x >= t {
        1.0
    } else if data.status_codes()[i] == 2 {
        g_at(steps, t) / g_at(steps, x)
    } else {
        0.0
    }
}

pub fn linear_predictor(data: &CompetingRisksData, beta: &[f64]) -> Vec<f64> {
    let z = data.covariates();
    (0..data.n())
        .map(|i| (0..data.p()).map(|j| z[[i, j]] * beta[j]).sum())
        .collect()
}

/// Subjects with an observed cause-1 event.
pub fn events(data: &CompetingRisksData) -> Vec<usize> {
    (0..data.n()).filter(|&i| data.status_codes()[i] == 1).collect()
}

/// `(S0 n, Z̄)` at time `t`, by direct summation.
pub fn zbar(data: &CompetingRisksData, steps: &(Vec<f64>, Vec<f64>), beta: &[f64], t: f64) -> (f64, Vec<f64>) {
    let eta = linear_predictor(data, beta);
    let z = data.covariates();
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; data.p()];
    for j in 0..data.n() {
        let w = weight(data, steps, j, t) * eta[j].exp();
        s0 += w;
        for (k, s) in s1.iter_mut().enumerate() {
            *s += w * z[[j, k]];
        }
    }
    (s0, s1.iter().map(|s| s / s0).collect())
}

/// `m(β) = n⁻¹ Σ_events [β'Z_i − log Σ_j w_j(X_i) e^{β'Z_j}]`.
pub fn loglik(data: &CompetingRisksData, beta: &[f64]) -> f64 {
    let steps = km_brute(data.times().as_slice().unwrap(), data.status_codes());
    let eta = linear_predictor(data, beta);
    let mut m = 0.0;
    for i in events(data) {
        let (s0, _) = zbar(data, &steps, beta, data.times()[i]);
        m += eta[i] - s0.ln();
    }
    m / data.n() as f64
}

/// `n⁻¹ Σ_events (Z_i − Z̄(X_i))^{⊗2}` by explicit loops.
pub fn sigma_hat(data: &CompetingRisksData, beta: &[f64]) -> Array2<f64> {
    let steps = km_brute(data.times().as_slice().unwrap(), data.status_codes());
    let p = data.p();
    let z = data.covariates();
    let mut out = Array2::zeros((p, p));
    for i in events(data) {
        let (_, zb) = zbar(data, &steps, beta, data.times()[i]);
        for a in 0..p {
            for b in 0..p {
                out[[a, b]] += (z[[i, a]] - zb[a]) * (z[[i, b]] - zb[b]);
            }
        }
    }
    out / data.n() as f64
}

/// Naive `η̂_i`, `ψ̂_i` straight from the martingale integrals.
pub fn influence(data: &CompetingRisksData, beta: &[f64]) -> (Array2<f64>, Array2<f64>) {
    let n = data.n();
    let p = data.p();
    let times = data.times();
    let status = data.status_codes();
    let z = data.covariates();
    let steps = km_brute(times.as_slice().unwrap(), status);
    let eta_lin = linear_predictor(data, beta);

    let mut grid: Vec<f64> = events(data).iter().map(|&i| times[i]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let d: Vec<f64> = grid
        .iter()
        .map(|&u| events(data).iter().filter(|&&i| times[i] == u).count() as f64)
        .collect();
    let bars: Vec<(f64, Vec<f64>)> = grid.iter().map(|&u| zbar(data, &steps, beta, u)).collect();

    // dM_i(u_k)
    let dm = |i: usize, k: usize| -> f64 {
        let jump = if status[i] == 1 && times[i] == grid[k] { 1.0 } else { 0.0 };
        jump - weight(data, &steps, i, grid[k]) * eta_lin[i].exp() * d[k] / bars[k].0
    };

    let mut eta = Array2::zeros((n, p));
    for i in 0..n {
        for k in 0..grid.len() {
            let m = dm(i, k);
            for a in 0..p {
                eta[[i, a]] += (z[[i, a]] - bars[k].1[a]) * m;
            }
        }
    }

    let mut cens: Vec<f64> = (0..n).filter(|&i| status[i] == 0).map(|i| times[i]).collect();
    cens.sort_by(f64::total_cmp);
    cens.dedup();
    let mut psi = Array2::zeros((n, p));
    for &t in &cens {
        let mut q = vec![0.0; p];
        for i in (0..n).filter(|&i| times[i] < t) {
            for k in (0..grid.len()).filter(|&k| grid[k] >= t) {
                let m = dm(i, k);
                for a in 0..p {
                    q[a] += (z[[i, a]] - bars[k].1[a]) * m;
                }
            }
        }
        q.iter_mut().for_each(|v| *v /= n as f64);
        let r = (0..n).filter(|&i| times[i] >= t).count() as f64;
        let dc = (0..n).filter(|&i| times[i] == t && status[i] == 0).count() as f64;
        let pi = r / n as f64;
        for i in (0..n).filter(|&i| times[i] >= t) {
            let own = if times[i] == t && status[i] == 0 { 1.0 } else { 0.0 };
            let dmc = own - dc / r;
            for a in 0..p {
                psi[[i, a]] += q[a] / pi * dmc;
            }
        }
    }
    (eta, psi)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Component-wise `|a − b| / max(|b|, 1)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs() / y.abs().max(1.0)))
}
