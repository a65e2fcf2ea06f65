//! Shared fixtures for the benchmarks.

use fgray::simgen::gen_setup1;
use fgray::{build_risk_grid, km_censoring, CompetingRisksData, RiskGrid, Setup1Config};

/// Setup 1 draw with the default censoring.
pub fn setup1(n: usize, p: usize, seed: u64) -> CompetingRisksData {
    let mut cfg = Setup1Config::new(n, p).expect("even p");
    cfg.seed = seed;
    gen_setup1(&cfg).expect("valid design")
}

pub fn grid(data: &CompetingRisksData) -> RiskGrid {
    build_risk_grid(data, &km_censoring(data)).expect("risk grid")
}
