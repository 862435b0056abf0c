//! Dynamic programming on the implicit product of a finite gMDP with a DFA:
//! plain, δ-robust, (ε,δ)-robust and optimistic Bellman operators, value
//! iteration, satisfaction probabilities, hitting-time diagnostics and an
//! exact linear-solve oracle.

mod hitting;
mod iteration;
mod operators;
mod oracle;

pub use hitting::{
    hitting_bound_rhs, hitting_tails, hitting_tails_all, largest_absorbing_set, mean_hitting_time,
    SUPPORT_EPS,
};
pub use iteration::{
    default_max_iter, gamma_bound, satisfaction_at, satisfaction_probability, value_iteration,
    IterationReport, ViParams, DEFAULT_TOL,
};
pub use operators::{
    apply_operator, bellman_op, optimistic_op, robust_delta_op, robust_eps_delta_op, Operator,
    OperatorKind, PolicyMode, SNAP_TOL,
};
pub use oracle::exact_reachability_oracle;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpError {
    #[error("non-finite value at state {state}, location {location} after {iteration} iterations")]
    NonFinite {
        state: usize,
        location: usize,
        iteration: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Values over product states `(i, q)`, stored at `i * n_locations + q`.
/// The sink is not stored; operators pin its value.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFn {
    n_states: usize,
    n_locations: usize,
    values: Vec<f64>,
}

impl ValueFn {
    pub fn constant(n_states: usize, n_locations: usize, v: f64) -> Self {
        ValueFn {
            n_states,
            n_locations,
            values: vec![v; n_states * n_locations],
        }
    }

    pub fn zeros(n_states: usize, n_locations: usize) -> Self {
        Self::constant(n_states, n_locations, 0.0)
    }

    pub fn from_vec(n_states: usize, n_locations: usize, values: Vec<f64>) -> Result<Self, DpError> {
        if values.len() != n_states * n_locations {
            return Err(DpError::Shape(format!(
                "{} values for {n_states} states x {n_locations} locations",
                values.len()
            )));
        }
        Ok(ValueFn {
            n_states,
            n_locations,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    #[inline]
    pub fn get(&self, i: usize, q: usize) -> f64 {
        self.values[i * self.n_locations + q]
    }

    pub fn set(&mut self, i: usize, q: usize, v: f64) {
        self.values[i * self.n_locations + q] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Largest absolute entrywise difference.
    pub fn sup_dist(&self, other: &ValueFn) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Stationary deterministic policy over product states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    n_states: usize,
    n_locations: usize,
    actions: Vec<u32>,
}

impl Policy {
    pub fn constant(n_states: usize, n_locations: usize, a: u32) -> Self {
        Policy {
            n_states,
            n_locations,
            actions: vec![a; n_states * n_locations],
        }
    }

    pub fn from_vec(n_states: usize, n_locations: usize, actions: Vec<u32>) -> Result<Self, DpError> {
        if actions.len() != n_states * n_locations {
            return Err(DpError::Shape(format!(
                "{} actions for {n_states} states x {n_locations} locations",
                actions.len()
            )));
        }
        Ok(Policy {
            n_states,
            n_locations,
            actions,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    #[inline]
    pub fn action(&self, i: usize, q: usize) -> usize {
        self.actions[i * self.n_locations + q] as usize
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.actions
    }
}

/// Which probability [`satisfaction_probability`] reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SatMode {
    /// `max(1_F(q̄0), V(x̂0, q̄0))` with `q̄0 = τ(q0, λ(x̂0))`.
    DeltaRobust,
    /// Minimum of the above over `q̄0 ∈ τ̄(q0, x̂0)`.
    EpsDeltaRobust,
    /// Maximum of the above over `q̄0 ∈ τ̄(q0, x̂0)`.
    Optimistic,
}
