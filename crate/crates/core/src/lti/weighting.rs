use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::lyapunov::{dlyap, symmetrize};
use super::LtiError;

const LYAPUNOV_SHIFT: f64 = 1e-9;

/// `M` with `ĀᵀMĀ − M = −CᵀC − 1e-9·I`. Then `M ⪰ CᵀC` and
/// `‖Āx‖_M < ‖x‖_M` for `x ≠ 0`.
pub fn default_m(abar: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>, LtiError> {
    let n = abar.nrows();
    if c.ncols() != n {
        return Err(LtiError::Dimension("C must have n columns".into()));
    }
    let rhs = c.transpose() * c + DMatrix::identity(n, n) * LYAPUNOV_SHIFT;
    dlyap(&abar.transpose(), &rhs)
}

/// Lower Cholesky factor `L` with `M = L Lᵀ`, so that `‖x‖_M = ‖Lᵀx‖`.
pub(crate) fn m_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LtiError> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| LtiError::NotPositiveDefinite("weighting matrix M".into()))
}

/// `Lᵀ Ā L⁻ᵀ`: `Ā` in coordinates where the `M`-norm is Euclidean.
pub(crate) fn whitened(abar: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    let lt = l.transpose();
    let lt_inv = lt.clone().try_inverse().expect("Cholesky factor is invertible");
    lt * abar * lt_inv
}

/// Induced `M`-norm of `Ā`: the square root of the largest generalized
/// eigenvalue of `(ĀᵀMĀ, M)`, computed as the spectral norm of `LᵀĀL⁻ᵀ`.
pub fn contraction_factor(abar: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64, LtiError> {
    if abar.shape() != m.shape() {
        return Err(LtiError::Dimension("Ā and M differ in shape".into()));
    }
    let l = m_factor(m)?;
    let g = whitened(abar, &l);
    let gram = symmetrize(g.transpose() * &g);
    let top = SymmetricEigen::new(gram).eigenvalues.max();
    Ok(top.max(0.0).sqrt())
}

#[derive(Clone, Debug)]
pub struct OptimizeParams {
    pub starts: usize,
    pub max_iters: u64,
    pub seed: u64,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        OptimizeParams {
            starts: 6,
            max_iters: 3000,
            seed: 0,
        }
    }
}

/// `M(θ) = CᵀC + L(θ)L(θ)ᵀ + 1e-9·I` with `θ` filling the lower triangle of
/// `L` row by row; `M(θ) ⪰ CᵀC` by construction.
fn m_of(theta: &[f64], ctc: &DMatrix<f64>) -> DMatrix<f64> {
    let n = ctc.nrows();
    let mut l = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            l[(i, j)] = theta[k];
            k += 1;
        }
    }
    ctc + &l * l.transpose() + DMatrix::identity(n, n) * LYAPUNOV_SHIFT
}

fn theta_of(m: &DMatrix<f64>, ctc: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let rest = m - ctc;
    let l = rest
        .clone()
        .cholesky()
        .or_else(|| (rest + DMatrix::identity(n, n) * 1e-12).cholesky())
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            out.push(l[(i, j)]);
        }
    }
    out
}

struct Objective<'a, F> {
    f: &'a F,
    ctc: &'a DMatrix<f64>,
}

impl<F: Fn(&DMatrix<f64>) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> Result<f64, ArgminError> {
        let v = (self.f)(&m_of(theta, self.ctc));
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

/// Searches the cone `M ⪰ CᵀC` for the weighting that minimizes
/// `objective` (typically the smallest certifiable ε), by seeded multi-start
/// Nelder–Mead. The first start is `m0`; the others perturb it. Returns the
/// best `M` and its objective value.
pub fn optimize_m<F>(
    c: &DMatrix<f64>,
    m0: &DMatrix<f64>,
    objective: F,
    params: &OptimizeParams,
) -> Result<(DMatrix<f64>, f64), LtiError>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let ctc = c.transpose() * c;
    let base = theta_of(m0, &ctc);
    let dim = base.len();
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let mut best = (m0.clone(), objective(m0));
    for s in 0..params.starts.max(1) {
        let start: Vec<f64> = if s == 0 {
            base.clone()
        } else {
            base.iter().map(|t| t + rng.random_range(-1.0..1.0)).collect()
        };
        let scale = start.iter().fold(0.0f64, |a, t| a.max(t.abs())).max(0.1) * 0.2;
        let mut simplex = vec![start.clone()];
        for k in 0..dim {
            let mut v = start.clone();
            v[k] += scale;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12)
            .map_err(|e| LtiError::InvalidParam(e.to_string()))?;
        let problem = Objective { f: &objective, ctc: &ctc };
        let res = Executor::new(problem, solver)
            .configure(|st| st.max_iters(params.max_iters))
            .run()
            .map_err(|e| LtiError::NoConvergence(format!("Nelder–Mead: {e}")))?;
        if let Some(theta) = res.state.best_param {
            let m = m_of(&theta, &ctc);
            let v = objective(&m);
            log::debug!("M search start {s}: objective {v}");
            if v < best.1 {
                best = (m, v);
            }
        }
    }
    Ok(best)
}
