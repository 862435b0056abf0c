//! Linear stochastic systems `x⁺ = A x + B u + B_w w`, `y = C x` with
//! Gaussian `w`: grid abstraction, model reduction, and certification of the
//! (ε,δ)-simulation relation between the concrete and the abstract model.

mod abstraction;
mod certify;
mod grid;
mod interface;
mod lyapunov;
mod noise;
mod reduction;
mod weighting;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mdp::BoxRegion;

pub use abstraction::{grid_abstraction, normal_cdf, AbstractionParams, DEFAULT_PRUNE_TOL};
pub use certify::{
    certify_relation, initial_abstract_state, A3Method, CertifyParams, ConditionReport, EpsObjective,
    InitialState, SimRelCert,
};
pub use grid::{input_grid, GridSpec};
pub use interface::{interface_apply, Interface};
pub use lyapunov::{dlyap, ensure_schur, spectral_radius};
pub use noise::{noise_quantile, DEFAULT_NOISE_SAMPLES};
pub use reduction::{
    align_lifting, normalize_output, project_inputs, reduce_balanced, solve_interface_matrices,
    BalancedReduction, ReducedModel, SYLVESTER_TOL,
};
pub use weighting::{contraction_factor, default_m, optimize_m, OptimizeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("closed loop is not Schur stable (spectral radius {rho})")]
    Unstable { rho: f64 },
    #[error("Sylvester residual {residual:e} exceeds tolerance; this lifting cannot be certified")]
    SylvesterResidual { residual: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("no contraction in the chosen norm (λ = {lambda})")]
    NoContraction { lambda: f64 },
    #[error("noise covariance is not diagonal; pre-whiten the reduced model")]
    NonDiagonalNoise,
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("point {point:?} lies outside the grid")]
    OutsideGrid { point: Vec<f64> },
    #[error("input {u:?} leaves the input box")]
    InputOutOfBounds { u: Vec<f64> },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{0} did not converge")]
    NoConvergence(String),
}

/// Concrete model. `w` is standard Gaussian of dimension `B_w.ncols()`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub bw: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub u_box: BoxRegion,
    pub x_box: BoxRegion,
    pub x0: DVector<f64>,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        bw: DMatrix<f64>,
        c: DMatrix<f64>,
        u_box: BoxRegion,
        x_box: BoxRegion,
        x0: DVector<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(LtiError::Dimension(what.to_string()))
            }
        };
        check(n > 0 && a.ncols() == n, "A must be square and nonempty")?;
        check(b.nrows() == n && b.ncols() > 0, "B must have n rows")?;
        check(bw.nrows() == n, "B_w must have n rows")?;
        check(c.ncols() == n && c.nrows() > 0, "C must have n columns")?;
        check(u_box.dim() == b.ncols(), "input box dimension differs from B's columns")?;
        check(x_box.dim() == n, "state box dimension differs from n")?;
        check(x0.len() == n, "x0 has the wrong length")?;
        for bx in [&u_box, &x_box] {
            if bx.lo.iter().zip(&bx.hi).any(|(l, h)| !(l <= h)) {
                return Err(LtiError::Dimension("box bounds must satisfy lo ≤ hi".into()));
            }
        }
        Ok(LinearSystem { a, b, bw, c, u_box, x_box, x0 })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn closed_loop(&self, k: &DMatrix<f64>) -> Result<DMatrix<f64>, LtiError> {
        if k.nrows() != self.m() || k.ncols() != self.n() {
            return Err(LtiError::Dimension("K must be m×n".into()));
        }
        Ok(&self.a + &self.b * k)
    }
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn pinv_lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14 * a.amax().max(1.0))
        .expect("SVD with both factors computed")
}
