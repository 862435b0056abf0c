use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use super::{run_coupled_trajectory, CoupledSystem, Outcome, SimError};

pub const CI_LEVEL: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub runs: usize,
    pub successes: usize,
    pub failures: usize,
    pub undecided: usize,
    pub horizon: usize,
    pub master_seed: u64,
    /// successes / N
    pub lower_rate: f64,
    /// (successes + undecided) / N
    pub upper_rate: f64,
    pub ci_level: f64,
    /// Clopper–Pearson interval for the lower rate.
    pub ci_lower_rate: [f64; 2],
    /// Clopper–Pearson interval for the upper rate.
    pub ci_upper_rate: [f64; 2],
    /// Larger of the two interval half-widths.
    pub ci_half_width: f64,
    pub bounds: [f64; 2],
    pub relation_exit_rate: f64,
    pub clamped_steps: usize,
    pub left_grid_runs: usize,
    pub verdict: Verdict,
}

/// Exact two-sided binomial interval at `level` for `k` successes in `n`.
pub fn clopper_pearson(k: usize, n: usize, level: f64) -> [f64; 2] {
    assert!(n > 0 && k <= n);
    let alpha = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).unwrap().inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    [lo, hi]
}

/// `n_runs` independent closed-loop runs; run `r` uses noise stream `r` of
/// `master_seed`, so the report does not depend on scheduling.
/// `bounds = [robust, optimistic]`.
pub fn monte_carlo_estimate(
    cs: &CoupledSystem<'_>,
    n_runs: usize,
    horizon: usize,
    master_seed: u64,
    bounds: [f64; 2],
) -> Result<McReport, SimError> {
    if n_runs == 0 {
        return Err(SimError::Setup("at least one run is required".into()));
    }
    let runs: Vec<_> = (0..n_runs)
        .into_par_iter()
        .map(|r| run_coupled_trajectory(cs, horizon, master_seed, r as u64, false))
        .collect::<Result<_, _>>()?;

    let count = |o: Outcome| runs.iter().filter(|t| t.outcome == o).count();
    let (successes, failures, undecided) = (count(Outcome::Sat), count(Outcome::UnsatTrap), count(Outcome::Undecided));
    let observed: usize = runs.iter().map(|t| t.steps + 1).sum();
    let exits: usize = runs.iter().map(|t| t.relation_exits).sum();

    let n = n_runs as f64;
    let lower_rate = successes as f64 / n;
    let upper_rate = (successes + undecided) as f64 / n;
    let ci_lower_rate = clopper_pearson(successes, n_runs, CI_LEVEL);
    let ci_upper_rate = clopper_pearson(successes + undecided, n_runs, CI_LEVEL);
    let half = |c: [f64; 2]| 0.5 * (c[1] - c[0]);
    let hw = half(ci_lower_rate).max(half(ci_upper_rate));

    let [robust, optimistic] = bounds;
    let intersects = lower_rate - hw <= optimistic && upper_rate + hw >= robust;
    let verdict = if intersects && robust <= upper_rate + hw {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let report = McReport {
        runs: n_runs,
        successes,
        failures,
        undecided,
        horizon,
        master_seed,
        lower_rate,
        upper_rate,
        ci_level: CI_LEVEL,
        ci_lower_rate,
        ci_upper_rate,
        ci_half_width: hw,
        bounds,
        relation_exit_rate: exits as f64 / observed as f64,
        clamped_steps: runs.iter().map(|t| t.clamped).sum(),
        left_grid_runs: runs.iter().filter(|t| t.left_grid).count(),
        verdict,
    };
    log::info!(
        "monte carlo: {successes}/{n_runs} sat, {failures} trapped, {undecided} undecided, verdict {:?}",
        report.verdict
    );
    Ok(report)
}
