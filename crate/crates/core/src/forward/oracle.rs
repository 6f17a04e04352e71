//! Independent verification oracle for concentric disks.
//!
//! For a circular cavity of radius R and the reference ball of radius a,
//! both centered at the origin, the scattered field separates into
//! cylindrical harmonics. The point source expands through the addition
//! theorem, each angular mode yields a 2x2 system for the (J_n, Y_n)
//! coefficients, and the series is truncated once the last mode contributes
//! less than 1e-12 relative. This path shares only the Bessel primitives
//! with the Nyström solver.

use super::{BoundaryCondition, ReferenceBall};
use crate::special::{bessel_j, bessel_j_deriv, bessel_y, bessel_y_deriv, hankel1, hankel1_deriv};
use crate::{C64, Error, Result};
use nalgebra::Point2;

const REL_TOL: f64 = 1e-12;

/// Scattered field and its radial derivative per mode, evaluated lazily.
struct ModeCoefficients {
    c: C64,
    d: C64,
}

struct ConcentricProblem {
    k: f64,
    cavity_radius: f64,
    ball_radius: f64,
    lambda: Option<C64>, // None = sound-soft cavity
    lambda0: f64,
}

impl ConcentricProblem {
    /// Boundary operator applied to a radial basis function at the cavity.
    fn cavity_op(&self, f: f64, fd: f64) -> C64 {
        match self.lambda {
            None => C64::new(f, 0.0),
            Some(lam) => C64::new(self.k * fd, 0.0) + lam * f,
        }
    }

    fn cavity_op_c(&self, f: C64, fd: C64) -> C64 {
        match self.lambda {
            None => f,
            Some(lam) => fd * self.k + lam * f,
        }
    }

    /// Ball operator du/dr + i lambda0 u at the ball radius (the ball's
    /// outward normal is +r here).
    fn ball_op(&self, f: f64, fd: f64) -> C64 {
        C64::new(self.k * fd, 0.0) + C64::new(0.0, self.lambda0) * f
    }

    fn mode(&self, n: usize, rz: f64) -> Result<ModeCoefficients> {
        let k = self.k;
        let (kr, ka) = (k * self.cavity_radius, k * self.ball_radius);
        let a11 = self.cavity_op(bessel_j(n, kr)?, bessel_j_deriv(n, kr)?);
        let a12 = self.cavity_op(bessel_y(n, kr)?, bessel_y_deriv(n, kr)?);
        let a21 = self.ball_op(bessel_j(n, ka)?, bessel_j_deriv(n, ka)?);
        let a22 = self.ball_op(bessel_y(n, ka)?, bessel_y_deriv(n, ka)?);
        let quarter_i = C64::new(0.0, 0.25);
        let b1 = -quarter_i
            * bessel_j(n, k * rz)?
            * self.cavity_op_c(hankel1(n, kr)?, hankel1_deriv(n, kr)?);
        let b2 = -quarter_i
            * hankel1(n, k * rz)?
            * self.ball_op(bessel_j(n, ka)?, bessel_j_deriv(n, ka)?);
        let det = a11 * a22 - a12 * a21;
        if det.norm() == 0.0 {
            return Err(Error::Numerical(format!(
                "concentric mode {n} is degenerate"
            )));
        }
        Ok(ModeCoefficients {
            c: (b1 * a22 - b2 * a12) / det,
            d: (a11 * b2 - a21 * b1) / det,
        })
    }
}

fn validate_geometry(
    cavity_radius: f64,
    ball: &ReferenceBall,
    z: &Point2<f64>,
    x: &Point2<f64>,
) -> Result<()> {
    if ball.center != [0.0, 0.0] {
        return Err(Error::Unsupported(
            "concentric oracle requires the ball centered at the origin".into(),
        ));
    }
    if !(ball.radius > 0.0 && ball.radius < cavity_radius) {
        return Err(Error::Unsupported(format!(
            "ball radius {} incompatible with cavity radius {}",
            ball.radius, cavity_radius
        )));
    }
    let rz = z.coords.norm();
    if rz <= ball.radius || rz >= cavity_radius {
        return Err(Error::Unsupported(format!(
            "source at radius {rz} is outside the open annulus ({}, {})",
            ball.radius, cavity_radius
        )));
    }
    // Evaluation points may sit on either boundary circle (used by the
    // boundary-condition residual checks of the series itself).
    let rx = x.coords.norm();
    if rx < ball.radius || rx > cavity_radius {
        return Err(Error::Unsupported(format!(
            "evaluation point at radius {rx} is outside the closed annulus [{}, {}]",
            ball.radius, cavity_radius
        )));
    }
    Ok(())
}

fn constant_lambda(bc: &BoundaryCondition) -> Result<Option<C64>> {
    match bc {
        BoundaryCondition::SoundSoft => Ok(None),
        BoundaryCondition::Impedance { lambda } => {
            if lambda.is_constant() {
                Ok(Some(C64::new(lambda.constant.0, lambda.constant.1)))
            } else {
                Err(Error::Unsupported(
                    "concentric oracle requires a constant impedance".into(),
                ))
            }
        }
    }
}

/// Scattered field of the concentric configuration with an explicit
/// truncation order (used by the convergence self-check).
pub fn concentric_scattered_with_order(
    cavity_radius: f64,
    bc: &BoundaryCondition,
    ball: &ReferenceBall,
    k: f64,
    z: &Point2<f64>,
    x: &Point2<f64>,
    order: usize,
) -> Result<C64> {
    validate_geometry(cavity_radius, ball, z, x)?;
    let problem = ConcentricProblem {
        k,
        cavity_radius,
        ball_radius: ball.radius,
        lambda: constant_lambda(bc)?,
        lambda0: ball.lambda0,
    };
    let rz = z.coords.norm();
    let rx = x.coords.norm();
    let dtheta = x.y.atan2(x.x) - z.y.atan2(z.x);
    let mut total = C64::new(0.0, 0.0);
    for n in 0..=order {
        let m = problem.mode(n, rz)?;
        let radial = m.c * bessel_j(n, k * rx)? + m.d * bessel_y(n, k * rx)?;
        let weight = if n == 0 { 1.0 } else { 2.0 * (n as f64 * dtheta).cos() };
        total += radial * weight;
    }
    Ok(total)
}

/// Scattered field with adaptive truncation: stops once two consecutive
/// modes contribute below 1e-12 relative.
pub fn concentric_scattered(
    cavity_radius: f64,
    bc: &BoundaryCondition,
    ball: &ReferenceBall,
    k: f64,
    z: &Point2<f64>,
    x: &Point2<f64>,
) -> Result<C64> {
    validate_geometry(cavity_radius, ball, z, x)?;
    let problem = ConcentricProblem {
        k,
        cavity_radius,
        ball_radius: ball.radius,
        lambda: constant_lambda(bc)?,
        lambda0: ball.lambda0,
    };
    let rz = z.coords.norm();
    let rx = x.coords.norm();
    let dtheta = x.y.atan2(x.x) - z.y.atan2(z.x);
    let mut total = C64::new(0.0, 0.0);
    let mut quiet = 0;
    for n in 0..crate::special::MAX_ORDER {
        let m = problem.mode(n, rz)?;
        let radial = m.c * bessel_j(n, k * rx)? + m.d * bessel_y(n, k * rx)?;
        let weight = if n == 0 { 1.0 } else { 2.0 * (n as f64 * dtheta).cos() };
        let contrib = radial * weight;
        total += contrib;
        // Compare the mode amplitude rather than the weighted term so a
        // cos zero cannot stop the series early.
        if radial.norm() < REL_TOL * total.norm().max(1e-300) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Numerical(
        "concentric series did not converge within the order cap".into(),
    ))
}

/// Total field u = Phi + u^s for the concentric configuration.
pub fn concentric_oracle(
    cavity_radius: f64,
    bc: &BoundaryCondition,
    ball: &ReferenceBall,
    k: f64,
    z: &Point2<f64>,
    x: &Point2<f64>,
) -> Result<C64> {
    let us = concentric_scattered(cavity_radius, bc, ball, k, z, x)?;
    Ok(crate::special::fundamental_2d(k, x, z)? + us)
}

/// Total-field radial derivative du/dr at |x|, for boundary-condition
/// residual checks of the series itself.
pub fn concentric_total_radial_deriv(
    cavity_radius: f64,
    bc: &BoundaryCondition,
    ball: &ReferenceBall,
    k: f64,
    z: &Point2<f64>,
    x: &Point2<f64>,
) -> Result<C64> {
    validate_geometry(cavity_radius, ball, z, x)?;
    let problem = ConcentricProblem {
        k,
        cavity_radius,
        ball_radius: ball.radius,
        lambda: constant_lambda(bc)?,
        lambda0: ball.lambda0,
    };
    let rz = z.coords.norm();
    let rx = x.coords.norm();
    let (r_small, r_large) = (rz.min(rx), rz.max(rx));
    let dtheta = x.y.atan2(x.x) - z.y.atan2(z.x);
    let mut total = C64::new(0.0, 0.0);
    let mut quiet = 0;
    for n in 0..crate::special::MAX_ORDER {
        let m = problem.mode(n, rz)?;
        let mut radial = (m.c * bessel_j_deriv(n, k * rx)? + m.d * bessel_y_deriv(n, k * rx)?) * k;
        // Incident part: (i/4) J_n(k r_<) H_n(k r_>), differentiated in rx.
        let quarter_i = C64::new(0.0, 0.25);
        let incident = if rx >= rz {
            quarter_i * bessel_j(n, k * r_small)? * hankel1_deriv(n, k * r_large)? * k
        } else {
            quarter_i * bessel_j_deriv(n, k * r_small)? * k * hankel1(n, k * r_large)?
        };
        radial += incident;
        let weight = if n == 0 { 1.0 } else { 2.0 * (n as f64 * dtheta).cos() };
        let contrib = radial * weight;
        total += contrib;
        if radial.norm() < REL_TOL * total.norm().max(1e-300) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Numerical(
        "concentric derivative series did not converge".into(),
    ))
}
