use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::lyapunov::{dlyap, symmetrize};
use super::{pinv_lstsq, LinearSystem, LtiError};

/// Largest admissible residual of `B Q = P A_s − A P`.
pub const SYLVESTER_TOL: f64 = 1e-8;

const GRAMIAN_REG: f64 = 1e-12;

/// Abstract model `x̂⁺ = A_s x̂ + B_s û + B_sw w`, `ŷ = C_s x̂`, together
/// with the lifting `P` from abstract to concrete coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct ReducedModel {
    #[serde(serialize_with = "ser_mat")]
    pub a_s: DMatrix<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub b_s: DMatrix<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub b_sw: DMatrix<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub c_s: DMatrix<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub p: DMatrix<f64>,
}

pub(crate) fn ser_mat<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&super::to_rows(m), s)
}

impl ReducedModel {
    /// No reduction: the abstract model is the concrete one and `P = I`.
    pub fn identity(sys: &LinearSystem) -> Self {
        ReducedModel {
            a_s: sys.a.clone(),
            b_s: sys.b.clone(),
            b_sw: sys.bw.clone(),
            c_s: sys.c.clone(),
            p: DMatrix::identity(sys.n(), sys.n()),
        }
    }

    pub fn n_s(&self) -> usize {
        self.a_s.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct BalancedReduction {
    pub reduced: ReducedModel,
    /// Hankel singular values, descending.
    pub hsv: Vec<f64>,
    /// Balancing transform `x_b = T x` and its inverse.
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
}

fn cholesky_regularized(w: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, LtiError> {
    if let Some(ch) = w.clone().cholesky() {
        return Ok(ch.l());
    }
    log::warn!("{what} Gramian is not positive definite (non-minimal realization); regularizing");
    let n = w.nrows();
    (w + DMatrix::identity(n, n) * GRAMIAN_REG)
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| LtiError::NotPositiveDefinite(format!("{what} Gramian")))
}

/// Balanced truncation of the closed loop `A + BK` to order `n_s`.
///
/// The controllability Gramian is driven by both `B` and `B_w`, so that the
/// noise channel counts as an input. `P` is the first `n_s` columns of the
/// inverse balancing transform; the reduced `A_s` is the closed-loop one.
pub fn reduce_balanced(sys: &LinearSystem, k: &DMatrix<f64>, n_s: usize) -> Result<BalancedReduction, LtiError> {
    let n = sys.n();
    if n_s == 0 || n_s > n {
        return Err(LtiError::InvalidParam(format!("reduction order {n_s} outside 1..={n}")));
    }
    let acl = sys.closed_loop(k)?;
    let drive = DMatrix::from_fn(n, sys.m() + sys.bw.ncols(), |i, j| {
        if j < sys.m() {
            sys.b[(i, j)]
        } else {
            sys.bw[(i, j - sys.m())]
        }
    });
    let wc = dlyap(&acl, &(&drive * drive.transpose()))?;
    let wo = dlyap(&acl.transpose(), &(sys.c.transpose() * &sys.c))?;
    let lc = cholesky_regularized(&wc, "controllability")?;
    let core = symmetrize(lc.transpose() * &wo * &lc);
    let eig = SymmetricEigen::new(core);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let floor = GRAMIAN_REG * eig.eigenvalues.amax().max(GRAMIAN_REG);
    if eig.eigenvalues.iter().any(|&s| s <= floor) {
        log::warn!("observability Gramian is singular on the reachable subspace; regularizing");
    }
    let sq: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(floor)).collect();
    let hsv: Vec<f64> = sq.iter().map(|s| s.sqrt()).collect();
    let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let lc_inv = lc
        .clone()
        .try_inverse()
        .ok_or_else(|| LtiError::NotPositiveDefinite("controllability factor".into()))?;
    // Lcᵀ Wo Lc = U Σ² Uᵀ; T = Σ^{1/2} Uᵀ Lc⁻¹ makes both Gramians equal Σ.
    let root = |f: fn(f64) -> f64| DMatrix::from_diagonal(&DVector::from_iterator(n, hsv.iter().map(|&h| f(h))));
    let t = root(|h| h.sqrt()) * u.transpose() * lc_inv;
    let t_inv = &lc * &u * root(|h| 1.0 / h.sqrt());
    let ab = &t * &acl * &t_inv;
    let tb = &t * &sys.b;
    let tbw = &t * &sys.bw;
    let ct = &sys.c * &t_inv;
    let reduced = ReducedModel {
        a_s: ab.view((0, 0), (n_s, n_s)).into_owned(),
        b_s: tb.rows(0, n_s).into_owned(),
        b_sw: tbw.rows(0, n_s).into_owned(),
        c_s: ct.columns(0, n_s).into_owned(),
        p: t_inv.columns(0, n_s).into_owned(),
    };
    Ok(BalancedReduction { reduced, hsv, t, t_inv })
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Replaces `P` by the closest (least squares over `Q`) lifting that solves
/// `P A_s = A P + B Q` exactly. Every solution has the form
/// `vec P = (A_sᵀ ⊗ I − I ⊗ A)⁻¹ (I ⊗ B) vec Q`, which needs the spectra of
/// `A_s` and `A` to be disjoint. `C_s` is updated to `C P`.
pub fn align_lifting(sys: &LinearSystem, reduced: &ReducedModel) -> Result<(ReducedModel, DMatrix<f64>), LtiError> {
    let n = sys.n();
    let m = sys.m();
    let n_s = reduced.n_s();
    if reduced.p.shape() != (n, n_s) {
        return Err(LtiError::Dimension("P must be n×n_s".into()));
    }
    let i_n = DMatrix::identity(n, n);
    let i_s = DMatrix::identity(n_s, n_s);
    let s = kron(&reduced.a_s.transpose(), &i_n) - kron(&i_s, &sys.a);
    let rhs = kron(&i_s, &sys.b);
    let g = s
        .lu()
        .solve(&rhs)
        .filter(|g| g.iter().all(|v| v.is_finite()))
        .ok_or_else(|| LtiError::InvalidParam("A_s and A share an eigenvalue; no exact lifting".into()))?;
    let target = DMatrix::from_column_slice(n * n_s, 1, reduced.p.as_slice());
    let vec_q = pinv_lstsq(&g, &target);
    let vec_p = &g * &vec_q;
    let p = DMatrix::from_column_slice(n, n_s, vec_p.as_slice());
    let q = DMatrix::from_column_slice(m, n_s, vec_q.as_slice());
    let out = ReducedModel {
        c_s: &sys.c * &p,
        p,
        ..reduced.clone()
    };
    Ok((out, q))
}

/// Changes abstract coordinates by `CP` so that `C_s = I` (requires
/// `p = n_s` and `CP` invertible). `Q` is transformed alongside, which keeps
/// the Sylvester identity intact.
pub fn normalize_output(
    sys: &LinearSystem,
    reduced: &ReducedModel,
    q: &DMatrix<f64>,
) -> Result<(ReducedModel, DMatrix<f64>), LtiError> {
    let cp = &sys.c * &reduced.p;
    if cp.nrows() != cp.ncols() {
        return Err(LtiError::Dimension("output normalization needs p = n_s".into()));
    }
    let inv = cp
        .clone()
        .try_inverse()
        .ok_or_else(|| LtiError::InvalidParam("CP is singular".into()))?;
    let out = ReducedModel {
        a_s: &cp * &reduced.a_s * &inv,
        b_s: &cp * &reduced.b_s,
        b_sw: &cp * &reduced.b_sw,
        c_s: DMatrix::identity(cp.nrows(), cp.nrows()),
        p: &reduced.p * &inv,
    };
    Ok((out, q * inv))
}

/// `B_s = P⁺_M B`, `B_sw = P⁺_M B_w` with the `M`-weighted left inverse
/// `P⁺_M = (PᵀMP)⁻¹PᵀM`, which minimizes `‖B − P B_s‖_M` column-wise.
pub fn project_inputs(sys: &LinearSystem, reduced: &ReducedModel, m: &DMatrix<f64>) -> Result<ReducedModel, LtiError> {
    let pt_m = reduced.p.transpose() * m;
    let gram = &pt_m * &reduced.p;
    let pinv = gram
        .try_inverse()
        .ok_or_else(|| LtiError::InvalidParam("PᵀMP is singular".into()))?
        * pt_m;
    Ok(ReducedModel {
        b_s: &pinv * &sys.b,
        b_sw: &pinv * &sys.bw,
        ..reduced.clone()
    })
}

/// `Q` from `B Q = P A_s − A P` (residual must stay below
/// [`SYLVESTER_TOL`]) and `R = B⁺ P B_s`, the minimizer of `‖BR − PB_s‖`.
pub fn solve_interface_matrices(
    sys: &LinearSystem,
    reduced: &ReducedModel,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LtiError> {
    let n_s = reduced.n_s();
    if reduced.p.shape() != (sys.n(), n_s) || reduced.b_s.nrows() != n_s {
        return Err(LtiError::Dimension("reduced model does not match the system".into()));
    }
    let rhs = &reduced.p * &reduced.a_s - &sys.a * &reduced.p;
    let q = pinv_lstsq(&sys.b, &rhs);
    let residual = (&sys.b * &q - &rhs).norm();
    log::debug!("Sylvester residual {residual:e}");
    if !(residual < SYLVESTER_TOL) {
        return Err(LtiError::SylvesterResidual { residual });
    }
    let r = pinv_lstsq(&sys.b, &(&reduced.p * &reduced.b_s));
    Ok((q, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::BoxRegion;
    use nalgebra::DVector;

    fn sys(a: DMatrix<f64>, b: DMatrix<f64>, bw: DMatrix<f64>, c: DMatrix<f64>) -> LinearSystem {
        let n = a.nrows();
        let m = b.ncols();
        LinearSystem::new(
            a,
            b,
            bw,
            c,
            BoxRegion::new(vec![-1.0; m], vec![1.0; m]),
            BoxRegion::new(vec![-10.0; n], vec![10.0; n]),
            DVector::zeros(n),
        )
        .unwrap()
    }

    pub(crate) fn toy() -> (LinearSystem, DMatrix<f64>) {
        let (a1, a2, a3, b, c1, c2) = (0.3, 0.03, 0.006, 0.8, 0.8, 0.1);
        let s = sys(
            DMatrix::from_row_slice(3, 3, &[1.0, -a1, a1, 0.0, b, 0.0, 0.0, 0.0, c1]),
            DMatrix::from_row_slice(3, 1, &[-a2, 1.0, 0.0]),
            DMatrix::from_row_slice(3, 1, &[a3, 0.0, c2]),
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        );
        let k = DMatrix::from_row_slice(1, 3, &[0.7738, -0.9369, 0.6829]);
        (s, k)
    }

    #[test]
    fn scalar_balancing() {
        let s = sys(
            DMatrix::from_element(1, 1, 0.8),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 0),
            DMatrix::from_element(1, 1, 1.0),
        );
        let r = reduce_balanced(&s, &DMatrix::zeros(1, 1), 1).unwrap();
        assert!((r.reduced.a_s[(0, 0)] - 0.8).abs() < 1e-12);
        // both Gramians are 1/(1 − 0.64), so balancing is the identity
        assert!((r.hsv[0] - 1.0 / 0.36).abs() < 1e-10);
        assert!((r.t[(0, 0)].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_order_preserves_hankel_values() {
        let (s, k) = toy();
        let r = reduce_balanced(&s, &k, 3).unwrap();
        let acl = s.closed_loop(&k).unwrap();
        let similar = &r.t_inv * &r.reduced.a_s * &r.t;
        assert!((similar - &acl).amax() < 1e-9);
        assert!(r.hsv.windows(2).all(|w| w[0] >= w[1]));
        // Gramians are equal and diagonal in balanced coordinates
        let drive = DMatrix::from_row_slice(3, 2, &[-0.03, 0.006, 1.0, 0.0, 0.0, 0.1]);
        let wc = dlyap(&r.reduced.a_s, &(&r.t * &drive * drive.transpose() * r.t.transpose())).unwrap();
        for i in 0..3 {
            assert!((wc[(i, i)] - r.hsv[i]).abs() < 1e-8 * r.hsv[0]);
        }
    }

    #[test]
    fn toy_reduces_to_one_dimension() {
        let (s, k) = toy();
        let bt = reduce_balanced(&s, &k, 1).unwrap();
        assert_eq!(bt.reduced.a_s.shape(), (1, 1));
        let (al, q) = align_lifting(&s, &bt.reduced).unwrap();
        let (nm, q) = normalize_output(&s, &al, &q).unwrap();
        assert!((&s.c * &nm.p - DMatrix::identity(1, 1)).amax() < 1e-12);
        let resid = &nm.p * &nm.a_s - &s.a * &nm.p - &s.b * &q;
        assert!(resid.amax() < 1e-12);
        let (q2, _) = solve_interface_matrices(&s, &nm).unwrap();
        assert!((q2 - q).amax() < 1e-10);
        assert!(nm.a_s[(0, 0)].abs() < 1.0);
    }

    #[test]
    fn identity_reduction_interface() {
        let s = sys(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 0.1f64.sqrt(),
            DMatrix::identity(2, 2),
        );
        let red = ReducedModel::identity(&s);
        let (q, r) = solve_interface_matrices(&s, &red).unwrap();
        assert_eq!(q, DMatrix::zeros(2, 2));
        assert_eq!(r, DMatrix::identity(2, 2));
    }

    #[test]
    fn consistent_random_instance() {
        // Build A_s, P, Q first, then choose A so that P A_s = A P + B Q holds.
        let p = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.3, 1.0, 0.5, 0.4]);
        let q_true = DMatrix::from_row_slice(2, 2, &[0.3, -0.1, 0.05, 0.2]);
        let a_s = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.6]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.3, -0.2]);
        let a0 = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.0, 0.7, 0.2, 0.1, 0.0, 0.5]);
        // correct A along range(P): A P = P A_s − B Q
        let rhs = &p * &a_s - &b * &q_true;
        let pp = pinv_lstsq(&p, &DMatrix::identity(3, 3));
        let a = &a0 + (&rhs - &a0 * &p) * pp;
        let s = sys(a, b, DMatrix::zeros(3, 0), DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]));
        let red = ReducedModel {
            a_s,
            b_s: DMatrix::identity(2, 2),
            b_sw: DMatrix::zeros(2, 0),
            c_s: &s.c * &p,
            p,
        };
        let (q, _) = solve_interface_matrices(&s, &red).unwrap();
        let resid = &s.b * &q - (&red.p * &red.a_s - &s.a * &red.p);
        assert!(resid.norm() < 1e-10);
        assert!((q - q_true).amax() < 1e-10);
    }

    #[test]
    fn sylvester_failure_is_reported() {
        let s = sys(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
        );
        let mut red = ReducedModel::identity(&s);
        red.a_s = DMatrix::identity(2, 2) * 0.9;
        assert!(matches!(
            solve_interface_matrices(&s, &red),
            Err(LtiError::SylvesterResidual { .. })
        ));
    }

    #[test]
    fn weighted_projection_recovers_lifted_inputs() {
        let (s, k) = toy();
        let bt = reduce_balanced(&s, &k, 1).unwrap();
        let (al, _) = align_lifting(&s, &bt.reduced).unwrap();
        let m = DMatrix::identity(3, 3);
        let pr = project_inputs(&s, &al, &m).unwrap();
        // residual B − P B_s is M-orthogonal to range(P)
        let resid = &s.b - &pr.p * &pr.b_s;
        assert!((pr.p.transpose() * &m * resid).amax() < 1e-12);
    }
}
