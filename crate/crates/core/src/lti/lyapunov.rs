use nalgebra::DMatrix;

use super::LtiError;

const DOUBLING_TOL: f64 = 1e-12;
const DOUBLING_MAX: usize = 64;

/// Spectral radius from the complex eigenvalues.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn ensure_schur(a: &DMatrix<f64>) -> Result<f64, LtiError> {
    let rho = spectral_radius(a);
    if rho < 1.0 {
        Ok(rho)
    } else {
        Err(LtiError::Unstable { rho })
    }
}

/// Solves `X = A X Aᵀ + W` for Schur-stable `A` by the doubling iteration
/// `X ← X + A X Aᵀ`, `A ← A²`, which sums the series `Σ A^k W (Aᵀ)^k` in
/// `log₂` many steps.
pub fn dlyap(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, LtiError> {
    ensure_schur(a)?;
    let mut x = w.clone();
    let mut ak = a.clone();
    for _ in 0..DOUBLING_MAX {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        let scale = x.amax().max(1.0);
        if inc.amax() <= DOUBLING_TOL * scale {
            return Ok(symmetrize(x));
        }
        ak = &ak * &ak;
    }
    Err(LtiError::NoConvergence("Lyapunov doubling".into()))
}

pub(crate) fn symmetrize(x: DMatrix<f64>) -> DMatrix<f64> {
    (&x + x.transpose()) * 0.5
}
