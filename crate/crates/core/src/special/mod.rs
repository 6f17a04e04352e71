//! Special functions: cylindrical Bessel/Hankel functions and the
//! fundamental solutions of the Helmholtz equation in 2D and 3D.

mod bessel;

pub use bessel::{
    bessel_j, bessel_j_deriv, bessel_y, bessel_y_deriv, MAX_ARGUMENT, MAX_ORDER,
};

use crate::{C64, Error, Result};
use nalgebra::{Point2, Point3, Vector2};

/// Which kind of cylindrical Bessel function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselKind {
    J,
    Y,
}

/// Bessel function of integer order `n >= 0`.
pub fn bessel(n: usize, kind: BesselKind, x: f64) -> Result<f64> {
    match kind {
        BesselKind::J => bessel_j(n, x),
        BesselKind::Y => bessel_y(n, x),
    }
}

/// Hankel function of the first kind, H_n = J_n + i Y_n.
pub fn hankel1(n: usize, x: f64) -> Result<C64> {
    Ok(C64::new(bessel_j(n, x)?, bessel_y(n, x)?))
}

/// d/dx H_n(x).
pub fn hankel1_deriv(n: usize, x: f64) -> Result<C64> {
    Ok(C64::new(bessel_j_deriv(n, x)?, bessel_y_deriv(n, x)?))
}

fn separation2(x: &Point2<f64>, z: &Point2<f64>) -> Result<f64> {
    let r = (x - z).norm();
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(r)
}

/// Outgoing fundamental solution of the 2D Helmholtz equation,
/// Phi(x, z) = (i/4) H_0(k |x - z|). Symmetric in its arguments.
pub fn fundamental_2d(k: f64, x: &Point2<f64>, z: &Point2<f64>) -> Result<C64> {
    let r = separation2(x, z)?;
    Ok(C64::new(0.0, 0.25) * hankel1(0, k * r)?)
}

/// Gradient of `fundamental_2d` with respect to `x`.
///
/// grad_x Phi = -(i k / 4) H_1(k r) (x - z) / r; the gradient with respect
/// to `z` is its negative.
pub fn grad_fundamental_2d(
    k: f64,
    x: &Point2<f64>,
    z: &Point2<f64>,
) -> Result<Vector2<C64>> {
    let r = separation2(x, z)?;
    let coef = C64::new(0.0, -0.25 * k) * hankel1(1, k * r)?;
    let d = (x - z) / r;
    Ok(Vector2::new(coef * d.x, coef * d.y))
}

/// Outgoing fundamental solution of the 3D Helmholtz equation,
/// e^{i k |x - z|} / (4 pi |x - z|). Evaluated for reference only; the
/// solver core is two-dimensional.
pub fn fundamental_3d(k: f64, x: &Point3<f64>, z: &Point3<f64>) -> Result<C64> {
    let r = (x - z).norm();
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(C64::new(0.0, k * r).exp() / (4.0 * std::f64::consts::PI * r))
}
