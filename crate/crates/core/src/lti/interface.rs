use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::reduction::ser_mat;
use super::LtiError;
use crate::mdp::BoxRegion;

/// `u = R û + Q x̂ + K (x − P x̂)`.
#[derive(Clone, Debug, Serialize)]
pub struct Interface {
    #[serde(serialize_with = "ser_mat")]
    pub r: DMatrix<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub q: DMatrix<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub k: DMatrix<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub p: DMatrix<f64>,
    pub u_box: BoxRegion,
}

impl Interface {
    pub fn raw(&self, u_hat: &DVector<f64>, x_hat: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.r * u_hat + &self.q * x_hat + &self.k * (x - &self.p * x_hat)
    }
}

/// Refines an abstract input. Outside `U` this is an error unless `clamp`
/// is set, in which case each axis is clamped and a warning is logged.
pub fn interface_apply(
    iface: &Interface,
    u_hat: &DVector<f64>,
    x_hat: &DVector<f64>,
    x: &DVector<f64>,
    clamp: bool,
) -> Result<DVector<f64>, LtiError> {
    let mut u = iface.raw(u_hat, x_hat, x);
    if iface.u_box.contains(u.as_slice()) {
        return Ok(u);
    }
    if !clamp {
        return Err(LtiError::InputOutOfBounds { u: u.as_slice().to_vec() });
    }
    log::warn!("interface output {:?} clamped to the input box", u.as_slice());
    for (i, v) in u.iter_mut().enumerate() {
        *v = v.clamp(iface.u_box.lo[i], iface.u_box.hi[i]);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn robot() -> Interface {
        Interface {
            r: DMatrix::identity(2, 2),
            q: DMatrix::zeros(2, 2),
            k: -DMatrix::identity(2, 2),
            p: DMatrix::identity(2, 2),
            u_box: BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
        }
    }

    #[test]
    fn robot_refinement() {
        let i = robot();
        let x_hat = DVector::from_vec(vec![1.1, 2.0]);
        let x = DVector::from_vec(vec![1.0, 2.1]);
        let u = interface_apply(&i, &DVector::from_vec(vec![0.5, 0.0]), &x_hat, &x, false).unwrap();
        assert!((u - DVector::from_vec(vec![0.6, -0.1])).amax() < 1e-12);
    }

    #[test]
    fn related_states_pass_through() {
        let mut i = robot();
        i.q = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -0.2]);
        let x_hat = DVector::from_vec(vec![0.5, 1.0]);
        let u_hat = DVector::from_vec(vec![0.2, 0.3]);
        let u = interface_apply(&i, &u_hat, &x_hat, &x_hat.clone(), false).unwrap();
        assert!((u - (&u_hat + &i.q * &x_hat)).amax() < 1e-15);
    }

    #[test]
    fn out_of_bounds() {
        let i = robot();
        let u_hat = DVector::from_vec(vec![0.9, 0.0]);
        let x_hat = DVector::from_vec(vec![1.0, 0.0]);
        let x = DVector::from_vec(vec![0.5, 0.0]);
        assert!(matches!(
            interface_apply(&i, &u_hat, &x_hat, &x, false),
            Err(LtiError::InputOutOfBounds { .. })
        ));
        let u = interface_apply(&i, &u_hat, &x_hat, &x, true).unwrap();
        assert_eq!(u[0], 1.0);
    }
}
