use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::interface::Interface;
use super::lyapunov::{ensure_schur, symmetrize};
use super::noise::{noise_quantile, rank_one_quantile, CommonSamples, DEFAULT_NOISE_SAMPLES};
use super::reduction::{project_inputs, ser_mat, solve_interface_matrices, ReducedModel};
use super::weighting::{contraction_factor, m_factor, whitened};
use super::{LinearSystem, LtiError};

/// Output-consistency tolerance of `C_s = CP`.
const OUTPUT_TOL: f64 = 1e-9;
const MAX_VERTEX_DIM: usize = 20;

/// How the contraction condition is checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum A3Method {
    /// `λε + b_u + b_β + r_δ ≤ ε`.
    Triangle,
    /// Exact worst case over the `M`-ball for every extreme disturbance.
    ExactBall,
}

#[derive(Clone, Debug)]
pub struct CertifyParams {
    pub method: A3Method,
    pub noise_seed: u64,
    pub noise_samples: usize,
}

impl Default for CertifyParams {
    fn default() -> Self {
        CertifyParams {
            method: A3Method::Triangle,
            noise_seed: 0,
            noise_samples: DEFAULT_NOISE_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub passed: bool,
    /// Positive when the condition holds with room to spare.
    pub margin: f64,
    pub detail: String,
}

impl ConditionReport {
    fn new(passed: bool, margin: f64, detail: String) -> Self {
        ConditionReport { passed, margin, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitialState {
    pub x_hat0: Vec<f64>,
    pub cell: usize,
    /// `‖x0 − P x̂0‖_M`.
    pub residual: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimRelCert {
    pub eps: f64,
    pub delta: f64,
    pub method: A3Method,
    #[serde(serialize_with = "ser_mat")]
    pub m: DMatrix<f64>,
    pub interface: Interface,
    pub lambda: f64,
    pub b_u: f64,
    pub b_beta: f64,
    pub r_delta: f64,
    /// Smallest ε the chosen A3 method certifies.
    pub eps_min: f64,
    pub eps_min_triangle: f64,
    pub a1: ConditionReport,
    pub a2: ConditionReport,
    pub a3: ConditionReport,
    pub interface_condition: ConditionReport,
    pub initial: Option<InitialState>,
    pub passed: bool,
}

/// `max ‖G z + e‖` over `‖z‖ ≤ ε` via the S-lemma dual
/// `min_{μ > λ_max(GᵀG)} ‖e‖² + με² + gᵀ(μ − GᵀG)⁻¹g`, `g = Gᵀe`. Every
/// `μ` gives an upper bound, so the bisection result is sound even when
/// it stops short of the optimum.
struct BallMax {
    g: DMatrix<f64>,
    eig: Vec<f64>,
    basis_t: DMatrix<f64>,
}

impl BallMax {
    fn new(g: DMatrix<f64>) -> Self {
        let h = symmetrize(g.transpose() * &g);
        let e = SymmetricEigen::new(h);
        BallMax {
            g,
            eig: e.eigenvalues.iter().copied().collect(),
            basis_t: e.eigenvectors.transpose(),
        }
    }

    fn max_norm(&self, e: &DVector<f64>, eps: f64) -> f64 {
        let ee = e.norm_squared();
        if eps == 0.0 {
            return ee.sqrt();
        }
        let gv = &self.basis_t * (self.g.transpose() * e);
        let lmax = self.eig.iter().copied().fold(0.0f64, f64::max);
        let gnorm = gv.norm();
        let terms: Vec<(f64, f64)> = gv
            .iter()
            .zip(&self.eig)
            .filter(|(g, _)| **g != 0.0)
            .map(|(g, l)| (g * g, *l))
            .collect();
        let bound = |mu: f64| ee + mu * eps * eps + terms.iter().map(|(g2, l)| g2 / (mu - l)).sum::<f64>();
        if gnorm == 0.0 {
            return (ee + lmax * eps * eps).sqrt();
        }
        let slope = |mu: f64| eps * eps - terms.iter().map(|(g2, l)| g2 / ((mu - l) * (mu - l))).sum::<f64>();
        let mut lo = lmax;
        let mut hi = lmax + gnorm / eps;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        bound(hi).max(0.0).sqrt()
    }
}

/// Extreme disturbances `B̄û + Pβ + B̄_w w` in whitened coordinates.
struct Disturbance {
    lambda: f64,
    b_u: f64,
    b_beta: f64,
    r_delta: f64,
    ball: BallMax,
    vertices: Vec<DVector<f64>>,
    /// Noise bound added by the triangle inequality when it could not be
    /// enumerated as a segment.
    extra: f64,
}

impl Disturbance {
    #[allow(clippy::too_many_arguments)]
    fn new(
        abar: &DMatrix<f64>,
        bbar: &DMatrix<f64>,
        bw_bar: &DMatrix<f64>,
        p: &DMatrix<f64>,
        m: &DMatrix<f64>,
        half_widths: &[f64],
        inputs: &[DVector<f64>],
        r_delta: f64,
    ) -> Result<Self, LtiError> {
        let n_s = half_widths.len();
        if n_s > MAX_VERTEX_DIM {
            return Err(LtiError::InvalidParam(format!(
                "vertex enumeration is capped at {MAX_VERTEX_DIM} abstract dimensions"
            )));
        }
        let l = m_factor(m)?;
        let lt = l.transpose();
        let lambda = contraction_factor(abar, m)?;
        let mnorm = |v: &DVector<f64>| (&lt * v).norm();
        let us: Vec<DVector<f64>> = if inputs.is_empty() {
            vec![DVector::zeros(bbar.nrows())]
        } else {
            inputs.iter().map(|u| bbar * u).collect()
        };
        let betas: Vec<DVector<f64>> = (0..1usize << n_s)
            .map(|mask| {
                let b = DVector::from_iterator(
                    n_s,
                    (0..n_s).map(|d| if mask >> d & 1 == 1 { half_widths[d] } else { -half_widths[d] }),
                );
                p * b
            })
            .collect();
        let b_u = us.iter().map(&mnorm).fold(0.0, f64::max);
        let b_beta = betas.iter().map(&mnorm).fold(0.0, f64::max);
        let (noise, extra): (Vec<DVector<f64>>, f64) = if r_delta == 0.0 {
            (vec![DVector::zeros(p.nrows())], 0.0)
        } else if bw_bar.ncols() == 1 && r_delta.is_finite() {
            let b = bw_bar.column(0).into_owned();
            let dir = &b * (r_delta / mnorm(&b));
            (vec![dir.clone(), -dir], 0.0)
        } else {
            (vec![DVector::zeros(p.nrows())], r_delta)
        };
        let mut vertices = Vec::with_capacity(us.len() * betas.len() * noise.len());
        for u in &us {
            for b in &betas {
                for w in &noise {
                    vertices.push(&lt * (u + b + w));
                }
            }
        }
        Ok(Disturbance {
            lambda,
            b_u,
            b_beta,
            r_delta,
            ball: BallMax::new(whitened(abar, &l)),
            vertices,
            extra,
        })
    }

    fn triangle_min(&self) -> f64 {
        if self.lambda >= 1.0 {
            return f64::INFINITY;
        }
        (self.b_u + self.b_beta + self.r_delta) / (1.0 - self.lambda)
    }

    fn worst(&self, eps: f64) -> f64 {
        if !self.extra.is_finite() {
            return f64::INFINITY;
        }
        self.vertices
            .iter()
            .map(|e| self.ball.max_norm(e, eps))
            .fold(0.0, f64::max)
            + self.extra
    }

    /// Smallest ε with `worst(ε) ≤ ε`. `worst(ε) − ε` is convex, and the
    /// triangle value is feasible, so bisection on `[0, triangle]` applies.
    fn exact_min(&self) -> f64 {
        let mut hi = self.triangle_min();
        if !hi.is_finite() {
            return f64::INFINITY;
        }
        if self.worst(0.0) == 0.0 {
            return 0.0;
        }
        let mut guard = 0;
        while self.worst(hi) > hi {
            hi *= 1.0 + 1e-9;
            guard += 1;
            if guard > 64 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.worst(mid) <= mid {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn min_eps(&self, method: A3Method) -> f64 {
        match method {
            A3Method::Triangle => self.triangle_min(),
            A3Method::ExactBall => self.exact_min(),
        }
    }

    /// `(holds, margin)` of A3 at `eps`.
    fn check(&self, eps: f64, method: A3Method) -> (bool, f64) {
        let lhs = match method {
            A3Method::Triangle => self.lambda * eps + self.b_u + self.b_beta + self.r_delta,
            A3Method::ExactBall => self.worst(eps),
        };
        (self.lambda < 1.0 && lhs <= eps, eps - lhs)
    }
}

fn residual_matrices(
    sys: &LinearSystem,
    reduced: &ReducedModel,
    iface: &Interface,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let abar = &sys.a + &sys.b * &iface.k;
    let bbar = &sys.b * &iface.r - &reduced.p * &reduced.b_s;
    let bw_bar = &sys.bw - &reduced.p * &reduced.b_sw;
    (abar, bbar, bw_bar)
}

/// `x̂0 = Π((PᵀMP)⁻¹PᵀM x0)`, with `ok` iff `‖x0 − P x̂0‖_M ≤ ε`.
pub fn initial_abstract_state(
    sys: &LinearSystem,
    p: &DMatrix<f64>,
    m: &DMatrix<f64>,
    grid: &GridSpec,
    eps: f64,
) -> Result<InitialState, LtiError> {
    let pt_m = p.transpose() * m;
    let xs = (&pt_m * p)
        .try_inverse()
        .ok_or_else(|| LtiError::InvalidParam("PᵀMP is singular".into()))?
        * (pt_m * &sys.x0);
    let cell = grid
        .cell_of(xs.as_slice())
        .ok_or_else(|| LtiError::OutsideGrid { point: xs.as_slice().to_vec() })?;
    let x_hat0 = grid.center(cell);
    let diff = &sys.x0 - p * DVector::from_column_slice(&x_hat0);
    let residual = (diff.transpose() * m * &diff)[(0, 0)].max(0.0).sqrt();
    Ok(InitialState { x_hat0, cell, residual, ok: residual <= eps })
}

/// Checks A1 (initial state), A2 (output consistency, `M ⪰ CᵀC`), A3
/// (one-step invariance of the `M`-ball of radius ε with probability
/// `1 − δ`) and the interface condition (refined inputs stay in `U`).
///
/// A failing condition is reported, not raised; the only errors are
/// malformed inputs and `λ ≥ 1`, for which no ε can work.
#[allow(clippy::too_many_arguments)]
pub fn certify_relation(
    sys: &LinearSystem,
    reduced: &ReducedModel,
    iface: &Interface,
    m: &DMatrix<f64>,
    grid: &GridSpec,
    inputs: &[DVector<f64>],
    eps: f64,
    delta: f64,
    params: &CertifyParams,
) -> Result<SimRelCert, LtiError> {
    let n = sys.n();
    let n_s = reduced.n_s();
    if grid.dim() != n_s || reduced.p.shape() != (n, n_s) || m.shape() != (n, n) {
        return Err(LtiError::Dimension("grid, lifting and M must match the models".into()));
    }
    if inputs.iter().any(|u| u.len() != reduced.b_s.ncols()) || iface.r.ncols() != reduced.b_s.ncols() {
        return Err(LtiError::Dimension("abstract inputs do not match B_s".into()));
    }
    if !(eps >= 0.0) || !(0.0..=1.0).contains(&delta) {
        return Err(LtiError::InvalidParam(format!("need ε ≥ 0 and δ ∈ [0, 1], got ({eps}, {delta})")));
    }
    let (abar, bbar, bw_bar) = residual_matrices(sys, reduced, iface);
    ensure_schur(&abar)?;
    let lambda = contraction_factor(&abar, m)?;
    if lambda >= 1.0 {
        return Err(LtiError::NoContraction { lambda });
    }
    let r_delta = noise_quantile(&bw_bar, m, delta, params.noise_seed, params.noise_samples)?;
    let dist = Disturbance::new(&abar, &bbar, &bw_bar, &reduced.p, m, &grid.half_widths(), inputs, r_delta)?;
    let eps_min_triangle = dist.triangle_min();
    let eps_min = dist.min_eps(params.method);
    let (a3_ok, a3_margin) = dist.check(eps, params.method);
    let a3 = ConditionReport::new(
        a3_ok,
        a3_margin,
        format!("λ = {lambda}, b_u = {}, b_β = {}, r_δ = {r_delta}, minimal ε = {eps_min}", dist.b_u, dist.b_beta),
    );

    // A2
    let c_err = (&reduced.c_s - &sys.c * &reduced.p).amax();
    let gap = symmetrize(m - sys.c.transpose() * &sys.c);
    let min_eig = SymmetricEigen::new(gap.clone()).eigenvalues.min();
    let psd = gap.clone().cholesky().is_some() || min_eig >= -1e-12 * m.amax().max(1.0);
    let a2 = ConditionReport::new(
        c_err <= OUTPUT_TOL && psd,
        if c_err <= OUTPUT_TOL { min_eig } else { OUTPUT_TOL - c_err },
        format!("‖C_s − CP‖ = {c_err:e}, λ_min(M − CᵀC) = {min_eig:e}"),
    );

    // Interface: per row, max |(Rû + Qx̂)_i| + ε·sqrt(K_i M⁻¹ K_iᵀ) within U.
    let m_inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| LtiError::NotPositiveDefinite("weighting matrix M".into()))?;
    let corners: Vec<DVector<f64>> = grid.extreme_centers().into_iter().map(DVector::from_vec).collect();
    let u_zero = [DVector::zeros(iface.r.ncols())];
    let us: &[DVector<f64>] = if inputs.is_empty() { &u_zero } else { inputs };
    let mut if_margin = f64::INFINITY;
    let mut worst_row = 0;
    for i in 0..sys.m() {
        let ki = iface.k.row(i);
        let spread = eps * (ki * &m_inv * ki.transpose())[(0, 0)].max(0.0).sqrt();
        let (mut top, mut bottom) = (f64::NEG_INFINITY, f64::INFINITY);
        for u in us {
            let ru = (&iface.r * u)[i];
            for c in &corners {
                let v = ru + (&iface.q * c)[i];
                top = top.max(v);
                bottom = bottom.min(v);
            }
        }
        let slack = (sys.u_box.hi[i] - (top + spread)).min((bottom - spread) - sys.u_box.lo[i]);
        if slack < if_margin {
            if_margin = slack;
            worst_row = i;
        }
    }
    let interface_condition = ConditionReport::new(
        if_margin >= 0.0,
        if_margin,
        format!("tightest input row {worst_row}"),
    );

    // A1
    let (initial, a1) = match initial_abstract_state(sys, &reduced.p, m, grid, eps) {
        Ok(s) => {
            let rep = ConditionReport::new(s.ok, eps - s.residual, format!("‖x0 − P x̂0‖_M = {}", s.residual));
            (Some(s), rep)
        }
        Err(e) => (None, ConditionReport::new(false, f64::NEG_INFINITY, e.to_string())),
    };

    let passed = a1.passed && a2.passed && a3.passed && interface_condition.passed;
    Ok(SimRelCert {
        eps,
        delta,
        method: params.method,
        m: m.clone(),
        interface: iface.clone(),
        lambda,
        b_u: dist.b_u,
        b_beta: dist.b_beta,
        r_delta,
        eps_min,
        eps_min_triangle,
        a1,
        a2,
        a3,
        interface_condition,
        initial,
        passed,
    })
}

/// Smallest certifiable ε as a function of `M`, for [`super::optimize_m`].
///
/// The noise quantile is the exact Gaussian one for scalar noise and an
/// empirical one over fixed samples otherwise, so that the objective is a
/// deterministic function of `M`.
pub struct EpsObjective<'a> {
    pub sys: &'a LinearSystem,
    /// Reduced model before input projection.
    pub reduced: &'a ReducedModel,
    pub k: &'a DMatrix<f64>,
    pub grid: &'a GridSpec,
    pub inputs: &'a [DVector<f64>],
    pub delta: f64,
    pub method: A3Method,
    /// Re-project `B_s`, `B_sw` for every `M` (false for the identity reduction).
    pub project: bool,
    samples: CommonSamples,
}

impl<'a> EpsObjective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sys: &'a LinearSystem,
        reduced: &'a ReducedModel,
        k: &'a DMatrix<f64>,
        grid: &'a GridSpec,
        inputs: &'a [DVector<f64>],
        delta: f64,
        method: A3Method,
        project: bool,
        seed: u64,
    ) -> Self {
        let samples = CommonSamples::new(sys.bw.ncols().max(1), 20_000, seed);
        EpsObjective { sys, reduced, k, grid, inputs, delta, method, project, samples }
    }

    pub fn eval(&self, m: &DMatrix<f64>) -> f64 {
        self.try_eval(m).unwrap_or(f64::INFINITY)
    }

    fn try_eval(&self, m: &DMatrix<f64>) -> Result<f64, LtiError> {
        let reduced = if self.project {
            project_inputs(self.sys, self.reduced, m)?
        } else {
            self.reduced.clone()
        };
        let (q, r) = solve_interface_matrices(self.sys, &reduced)?;
        let iface = Interface {
            r,
            q,
            k: self.k.clone(),
            p: reduced.p.clone(),
            u_box: self.sys.u_box.clone(),
        };
        let (abar, bbar, bw_bar) = residual_matrices(self.sys, &reduced, &iface);
        let r_delta = if bw_bar.iter().all(|&v| v == 0.0) {
            0.0
        } else if self.delta == 0.0 {
            f64::INFINITY
        } else {
            rank_one_quantile(&bw_bar, m, self.delta).unwrap_or_else(|| self.samples.quantile(&bw_bar, m, self.delta))
        };
        let dist = Disturbance::new(&abar, &bbar, &bw_bar, &reduced.p, m, &self.grid.half_widths(), self.inputs, r_delta)?;
        Ok(dist.min_eps(self.method))
    }
}
