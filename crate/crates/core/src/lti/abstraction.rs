use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use libm::erfc;

use super::grid::GridSpec;
use super::reduction::ReducedModel;
use super::LtiError;
use crate::mdp::{FiniteGmdp, SparseRow};

/// Kernel entries below this go to the sink. Routing mass to the sink is
/// pessimistic for the robust operator and optimistic for the optimistic
/// one, so pruning never makes either bound unsound.
pub const DEFAULT_PRUNE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct AbstractionParams {
    pub prune_tol: f64,
    /// Cells farther than this many standard deviations from the mean are
    /// skipped outright.
    pub sigma_cut: f64,
}

impl Default for AbstractionParams {
    fn default() -> Self {
        AbstractionParams {
            prune_tol: DEFAULT_PRUNE_TOL,
            sigma_cut: 9.0,
        }
    }
}

/// Standard normal CDF, `½ erfc(−x/√2)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ(b) − Φ(a)` for `a ≤ b`, evaluated on whichever tail avoids
/// cancellation.
fn interval_prob(a: f64, b: f64) -> f64 {
    let q = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    let p = if a >= 0.0 {
        q(a) - q(b)
    } else if b <= 0.0 {
        q(-b) - q(-a)
    } else {
        1.0 - q(b) - q(-a)
    };
    p.max(0.0)
}

/// Cell probabilities along one axis for `N(mean, σ²)`: `(first cell, probs)`.
fn axis_probs(grid: &GridSpec, d: usize, mean: f64, sigma: f64, cut: f64) -> (usize, Vec<f64>) {
    let n = grid.cells()[d];
    if sigma == 0.0 {
        return match grid.cell_1d(d, mean) {
            Some(k) => (k, vec![1.0]),
            None => (0, Vec::new()),
        };
    }
    let lo = grid.lo()[d];
    let w = grid.width(d);
    let edge = |k: usize| lo + k as f64 * w;
    let first = (((mean - cut * sigma - lo) / w).floor().max(0.0) as usize).min(n);
    let last = (((mean + cut * sigma - lo) / w).ceil().max(0.0) as usize).min(n);
    let probs = (first..last)
        .map(|k| interval_prob((edge(k) - mean) / sigma, (edge(k + 1) - mean) / sigma))
        .collect();
    (first, probs)
}

/// Grid abstraction of `x̂⁺ = A_s x̂ + B_s û + B_sw w`: states are the cells
/// of `grid` (representative = centre), actions are `inputs`, and
/// `t̂(j | i, û)` is the Gaussian mass of cell `j`. Mass leaving the grid
/// goes to the sink. Outputs are `C_s x̂`.
pub fn grid_abstraction(
    reduced: &ReducedModel,
    grid: &GridSpec,
    inputs: &[DVector<f64>],
    initial: usize,
    params: &AbstractionParams,
) -> Result<FiniteGmdp, LtiError> {
    let n_s = reduced.n_s();
    if grid.dim() != n_s {
        return Err(LtiError::Dimension(format!("grid has dimension {}, model {n_s}", grid.dim())));
    }
    if inputs.is_empty() || inputs.iter().any(|u| u.len() != reduced.b_s.ncols()) {
        return Err(LtiError::Dimension("inputs must be nonempty and match B_s".into()));
    }
    if !(params.prune_tol >= 0.0) || !(params.sigma_cut > 0.0) {
        return Err(LtiError::InvalidParam("prune_tol ≥ 0 and sigma_cut > 0 required".into()));
    }
    let cov: DMatrix<f64> = &reduced.b_sw * reduced.b_sw.transpose();
    for i in 0..n_s {
        for j in 0..n_s {
            if i != j && cov[(i, j)].abs() > 1e-12 * cov[(i, i)].max(cov[(j, j)]).max(f64::MIN_POSITIVE) {
                return Err(LtiError::NonDiagonalNoise);
            }
        }
    }
    let sigma: Vec<f64> = (0..n_s).map(|d| cov[(d, d)].sqrt()).collect();
    let n = grid.n_cells();
    let m = inputs.len();
    let centers: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_vec(grid.center(i))).collect();
    let drift: Vec<DVector<f64>> = inputs.iter().map(|u| &reduced.b_s * u).collect();

    let rows: Vec<SparseRow> = (0..n * m)
        .into_par_iter()
        .map(|r| {
            let mean = &reduced.a_s * &centers[r / m] + &drift[r % m];
            let axes: Vec<(usize, Vec<f64>)> = (0..n_s)
                .map(|d| axis_probs(grid, d, mean[d], sigma[d], params.sigma_cut))
                .collect();
            tensor_row(grid, &axes, params.prune_tol)
        })
        .collect();

    let p = reduced.c_s.nrows();
    let mut outputs = Vec::with_capacity(n * p);
    for c in &centers {
        outputs.extend((&reduced.c_s * c).iter());
    }
    FiniteGmdp::from_rows(n, m, rows, p, outputs, initial).map_err(|e| LtiError::InvalidParam(e.to_string()))
}

/// Outer product of the per-axis probabilities, in ascending flat index.
fn tensor_row(grid: &GridSpec, axes: &[(usize, Vec<f64>)], prune_tol: f64) -> SparseRow {
    let mut row = SparseRow::default();
    if axes.iter().any(|(_, p)| p.is_empty()) {
        row.sink = 1.0;
        return row;
    }
    let dims = axes.len();
    let mut pos = vec![0usize; dims];
    let mut kept = 0.0;
    'outer: loop {
        let mut p = 1.0;
        let mut idx = 0usize;
        for d in 0..dims {
            p *= axes[d].1[pos[d]];
            idx = idx * grid.cells()[d] + axes[d].0 + pos[d];
        }
        if p >= prune_tol && p > 0.0 {
            row.cols.push(idx as u32);
            row.probs.push(p);
            kept += p;
        }
        for d in (0..dims).rev() {
            pos[d] += 1;
            if pos[d] < axes[d].1.len() {
                continue 'outer;
            }
            pos[d] = 0;
        }
        break;
    }
    if kept > 1.0 {
        // rounding: renormalise so that the row stays stochastic
        for p in &mut row.probs {
            *p /= kept;
        }
        kept = 1.0;
    }
    row.sink = (1.0 - kept).max(0.0);
    row
}
