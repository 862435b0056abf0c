use std::time::Instant;

use serde::Serialize;

use super::operators::{apply_operator, Operator, PolicyMode};
use super::{DpError, Policy, SatMode, ValueFn};
use crate::mdp::{FiniteGmdp, LabelCache};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ViParams {
    pub tol: f64,
    /// `None` selects [`default_max_iter`].
    pub max_iter: Option<usize>,
    /// Starting value; zeros when `None`.
    pub v_init: Option<ValueFn>,
    /// Evaluate this policy instead of optimising.
    pub policy: Option<Policy>,
}

impl Default for ViParams {
    fn default() -> Self {
        ViParams {
            tol: DEFAULT_TOL,
            max_iter: None,
            v_init: None,
            policy: None,
        }
    }
}

/// `10·⌈1/δ⌉` for `δ > 0` (all activity on absorbing sets has ended by
/// then), `10⁵` otherwise.
pub fn default_max_iter(delta: f64) -> usize {
    if delta > 0.0 {
        10 * (1.0 / delta).ceil() as usize
    } else {
        100_000
    }
}

/// Iterates `op` until the sup-norm change drops below `tol` or the budget
/// runs out, then extracts a greedy policy from the final value.
///
/// Non-convergence is not an error: the report carries the last residual.
pub fn value_iteration(
    op: &Operator,
    g: &FiniteGmdp,
    cache: &LabelCache,
    params: &ViParams,
) -> Result<(ValueFn, Policy, IterationReport), DpError> {
    if !(params.tol > 0.0) {
        return Err(DpError::InvalidParam(format!("tol must be positive, got {}", params.tol)));
    }
    if !(0.0..=1.0).contains(&op.delta) {
        return Err(DpError::InvalidParam(format!("delta must lie in [0, 1], got {}", op.delta)));
    }
    let n = g.n_states();
    let nq = cache.n_locations();
    let mut v = match &params.v_init {
        Some(v0) => {
            if (v0.n_states(), v0.n_locations()) != (n, nq) {
                return Err(DpError::Shape("initial value has the wrong shape".into()));
            }
            if v0.as_slice().iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(DpError::InvalidParam("initial value must lie in [0, 1]".into()));
            }
            v0.clone()
        }
        None => ValueFn::zeros(n, nq),
    };
    if let Some(p) = &params.policy {
        if (p.n_states(), p.n_locations()) != (n, nq) {
            return Err(DpError::Shape("policy has the wrong shape".into()));
        }
        if p.as_slice().iter().any(|&a| a as usize >= g.n_actions()) {
            return Err(DpError::InvalidParam("policy uses an unknown action".into()));
        }
    }
    let mode = match &params.policy {
        Some(p) => PolicyMode::Fixed(p),
        None => PolicyMode::Optimize,
    };
    let max_iter = params.max_iter.unwrap_or_else(|| default_max_iter(op.delta));
    let start = Instant::now();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let (next, _) = apply_operator(op, &v, g, cache, mode);
        iterations += 1;
        if let Some(k) = next.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(DpError::NonFinite {
                state: k / nq,
                location: k % nq,
                iteration: iterations,
            });
        }
        residual = next.sup_dist(&v);
        v = next;
        if residual < params.tol {
            break;
        }
    }
    let policy = match &params.policy {
        Some(p) => p.clone(),
        None => apply_operator(op, &v, g, cache, PolicyMode::Optimize)
            .1
            .expect("optimize mode returns a policy"),
    };
    log::debug!(
        "{:?} δ={} finished after {iterations} sweeps, residual {residual:e}",
        op.kind,
        op.delta
    );
    let report = IterationReport {
        iterations,
        residual,
        converged: residual < params.tol,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((v, policy, report))
}

/// Satisfaction probability from state `i`, read off a converged value.
pub fn satisfaction_at(v: &ValueFn, cache: &LabelCache, i: usize, mode: SatMode) -> f64 {
    let worth = |q: usize| {
        if cache.is_accepting(q) {
            1.0
        } else {
            v.get(i, q)
        }
    };
    let q0 = cache.q0();
    match mode {
        SatMode::DeltaRobust => worth(cache.succ(i, q0)),
        SatMode::EpsDeltaRobust => cache
            .succ_set(i, q0)
            .iter()
            .map(|&q| worth(q as usize))
            .fold(f64::INFINITY, f64::min),
        SatMode::Optimistic => cache
            .succ_set(i, q0)
            .iter()
            .map(|&q| worth(q as usize))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Satisfaction probability from the model's initial state.
pub fn satisfaction_probability(v: &ValueFn, g: &FiniteGmdp, cache: &LabelCache, mode: SatMode) -> f64 {
    satisfaction_at(v, cache, g.initial(), mode)
}

/// `1 − (1 − δ)^N`: worst-case probability loss over `N` steps.
pub fn gamma_bound(n: u32, delta: f64) -> f64 {
    1.0 - (1.0 - delta).powi(n as i32)
}
