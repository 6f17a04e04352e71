//! Parametrized closed curves, open measurement arcs and periodic quadrature.
//!
//! Three curve families cover the benchmark scenes: circles, the kite shape
//! (cos t + 0.65 cos 2t - 0.65, 1.5 sin t) and star-shaped curves with a
//! trigonometric radial polynomial. All are C-infinity and positively
//! oriented, so the outward normal is (x2', -x1')/|x'|.

use crate::{Error, Result};
use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// A simple closed parametrized curve, 2*pi-periodic, positively oriented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClosedCurve {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Standard kite benchmark shape, optionally translated and scaled.
    Kite {
        center: [f64; 2],
        scale: f64,
    },
    /// Star-shaped curve rho(t) = a0 + sum_j (a_j cos jt + b_j sin jt) about `center`.
    StarTrig {
        center: [f64; 2],
        a0: f64,
        #[serde(default)]
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
    },
}

/// Point, unit tangent, outward unit normal and parametrization speed at t.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub point: Point2<f64>,
    pub tangent: Vector2<f64>,
    pub normal: Vector2<f64>,
    pub speed: f64,
}

impl ClosedCurve {
    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self> {
        let c = ClosedCurve::Circle { center, radius };
        c.validate()?;
        Ok(c)
    }

    pub fn kite(center: [f64; 2], scale: f64) -> Result<Self> {
        let c = ClosedCurve::Kite { center, scale };
        c.validate()?;
        Ok(c)
    }

    pub fn star_trig(center: [f64; 2], a0: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let c = ClosedCurve::StarTrig { center, a0, a, b };
        c.validate()?;
        Ok(c)
    }

    /// Checks finiteness, positive speed and (for star curves) a positive
    /// radial function on a 512-point grid.
    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            ClosedCurve::Circle { center, radius } => {
                center.iter().all(|v| v.is_finite()) && radius.is_finite() && *radius > 0.0
            }
            ClosedCurve::Kite { center, scale } => {
                center.iter().all(|v| v.is_finite()) && scale.is_finite() && *scale > 0.0
            }
            ClosedCurve::StarTrig { center, a0, a, b } => {
                center.iter().all(|v| v.is_finite())
                    && a0.is_finite()
                    && a.iter().chain(b.iter()).all(|v| v.is_finite())
                    && a.len() <= 16
                    && b.len() <= 16
            }
        };
        if !finite {
            return Err(Error::InvalidCurve(
                "non-finite, non-positive or oversized parameters".into(),
            ));
        }
        let n = 512;
        for i in 0..n {
            let t = TAU * i as f64 / n as f64;
            if let ClosedCurve::StarTrig { .. } = self {
                let rho = self.radial(t);
                if rho <= 0.0 {
                    return Err(Error::InvalidCurve(format!(
                        "radial function not positive at t = {t:.4}: rho = {rho:.4e}"
                    )));
                }
            }
            let (_, d1, _) = self.derivatives(t);
            if d1.norm() <= 1e-12 {
                return Err(Error::InvalidCurve(format!(
                    "vanishing speed at t = {t:.4}"
                )));
            }
        }
        Ok(())
    }

    /// Radial function for star curves; 0 elsewhere (unused).
    fn radial(&self, t: f64) -> f64 {
        match self {
            ClosedCurve::StarTrig { a0, a, b, .. } => {
                let mut rho = *a0;
                for (j, aj) in a.iter().enumerate() {
                    rho += aj * ((j + 1) as f64 * t).cos();
                }
                for (j, bj) in b.iter().enumerate() {
                    rho += bj * ((j + 1) as f64 * t).sin();
                }
                rho
            }
            _ => 0.0,
        }
    }

    /// Position and first two parameter derivatives at t.
    pub fn derivatives(&self, t: f64) -> (Point2<f64>, Vector2<f64>, Vector2<f64>) {
        match self {
            ClosedCurve::Circle { center, radius } => {
                let (s, c) = t.sin_cos();
                let p = Point2::new(center[0] + radius * c, center[1] + radius * s);
                let d1 = Vector2::new(-radius * s, radius * c);
                let d2 = Vector2::new(-radius * c, -radius * s);
                (p, d1, d2)
            }
            ClosedCurve::Kite { center, scale } => {
                let (s, c) = t.sin_cos();
                let (s2, c2) = (2.0 * t).sin_cos();
                let p = Point2::new(
                    center[0] + scale * (c + 0.65 * c2 - 0.65),
                    center[1] + scale * 1.5 * s,
                );
                let d1 = Vector2::new(scale * (-s - 1.3 * s2), scale * 1.5 * c);
                let d2 = Vector2::new(scale * (-c - 2.6 * c2), scale * (-1.5) * s);
                (p, d1, d2)
            }
            ClosedCurve::StarTrig { center, a0, a, b } => {
                let mut rho = *a0;
                let mut drho = 0.0;
                let mut ddrho = 0.0;
                for (idx, aj) in a.iter().enumerate() {
                    let j = (idx + 1) as f64;
                    let (sj, cj) = (j * t).sin_cos();
                    rho += aj * cj;
                    drho -= aj * j * sj;
                    ddrho -= aj * j * j * cj;
                }
                for (idx, bj) in b.iter().enumerate() {
                    let j = (idx + 1) as f64;
                    let (sj, cj) = (j * t).sin_cos();
                    rho += bj * sj;
                    drho += bj * j * cj;
                    ddrho -= bj * j * j * sj;
                }
                let (s, c) = t.sin_cos();
                let e = Vector2::new(c, s);
                let ep = Vector2::new(-s, c);
                let p = Point2::new(center[0] + rho * c, center[1] + rho * s);
                let d1 = drho * e + rho * ep;
                let d2 = (ddrho - rho) * e + 2.0 * drho * ep;
                (p, d1, d2)
            }
        }
    }

    /// Point, unit tangent, outward unit normal and speed at t in [0, 2*pi).
    pub fn evaluate(&self, t: f64) -> CurvePoint {
        let (point, d1, _) = self.derivatives(t);
        let speed = d1.norm();
        let tangent = d1 / speed;
        let normal = Vector2::new(tangent.y, -tangent.x);
        CurvePoint {
            point,
            tangent,
            normal,
            speed,
        }
    }

    /// Winding-number test against a 512-gon sampling of the curve.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        let n = 512;
        let mut winding = 0i32;
        let mut prev = self.derivatives(0.0).0;
        for i in 1..=n {
            let t = TAU * i as f64 / n as f64;
            let cur = self.derivatives(t).0;
            if prev.y <= p.y {
                if cur.y > p.y && cross(&(cur - prev), &(p - prev)) > 0.0 {
                    winding += 1;
                }
            } else if cur.y <= p.y && cross(&(cur - prev), &(p - prev)) < 0.0 {
                winding -= 1;
            }
            prev = cur;
        }
        winding != 0
    }

    /// Minimum distance from `p` to the sampled curve.
    pub fn distance_to(&self, p: &Point2<f64>) -> f64 {
        let n = 1024;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let t = TAU * i as f64 / n as f64;
            best = best.min((self.derivatives(t).0 - p).norm());
        }
        best
    }

    /// Diameter estimate from a 256-point sampling.
    pub fn diameter(&self) -> f64 {
        let n = 256;
        let pts: Vec<Point2<f64>> = (0..n)
            .map(|i| self.derivatives(TAU * i as f64 / n as f64).0)
            .collect();
        let mut d = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                d = d.max((pts[i] - pts[j]).norm());
            }
        }
        d
    }
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Equispaced periodic quadrature data on a closed curve.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub points: Vec<Point2<f64>>,
    pub normals: Vec<Vector2<f64>>,
    pub speeds: Vec<f64>,
    /// Trapezoidal weight 2*pi/n shared by all nodes.
    pub weight: f64,
}

/// Samples `curve` at n equispaced nodes t_i = 2*pi*i/n. Requires even n >= 8.
pub fn quadrature_nodes(curve: &ClosedCurve, n: usize) -> Result<Quadrature> {
    if n < 8 || n % 2 != 0 {
        return Err(Error::BadNodeCount(n, 8));
    }
    let mut nodes = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    for i in 0..n {
        let t = TAU * i as f64 / n as f64;
        let cp = curve.evaluate(t);
        nodes.push(t);
        points.push(cp.point);
        normals.push(cp.normal);
        speeds.push(cp.speed);
    }
    Ok(Quadrature {
        nodes,
        points,
        normals,
        speeds,
        weight: TAU / n as f64,
    })
}

/// An open arc of a circle, the carrier of receivers and sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: [f64; 2],
    pub radius: f64,
    /// Angular interval [theta0, theta1], 0 < theta1 - theta0 <= 2*pi.
    pub theta: [f64; 2],
}

impl Arc {
    pub fn new(center: [f64; 2], radius: f64, theta: [f64; 2]) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0)
            || theta.iter().any(|v| !v.is_finite())
            || theta[1] <= theta[0]
            || theta[1] - theta[0] > TAU + 1e-12
        {
            return Err(Error::InvalidCurve(format!(
                "bad arc: radius {radius}, theta {theta:?}"
            )));
        }
        Ok(Arc {
            center,
            radius,
            theta,
        })
    }

    /// `count` points equispaced in angle, offset half a step from the arc
    /// endpoints so the arc stays open.
    pub fn points(&self, count: usize) -> Vec<Point2<f64>> {
        let step = (self.theta[1] - self.theta[0]) / count as f64;
        (0..count)
            .map(|i| {
                let th = self.theta[0] + (i as f64 + 0.5) * step;
                self.point_at(th)
            })
            .collect()
    }

    pub fn point_at(&self, th: f64) -> Point2<f64> {
        Point2::new(
            self.center[0] + self.radius * th.cos(),
            self.center[1] + self.radius * th.sin(),
        )
    }

    /// Unit normal pointing away from the arc's center at angle th.
    pub fn outward_at(&self, th: f64) -> Vector2<f64> {
        Vector2::new(th.cos(), th.sin())
    }

    /// Angles of the sample points, matching `points`.
    pub fn angles(&self, count: usize) -> Vec<f64> {
        let step = (self.theta[1] - self.theta[0]) / count as f64;
        (0..count)
            .map(|i| self.theta[0] + (i as f64 + 0.5) * step)
            .collect()
    }
}

/// A disk region together with an arc on its boundary circle.
///
/// The disk radius is constrained by k * r < pi, which keeps k^2 below the
/// first Dirichlet eigenvalue of the disk, so fields vanishing on the arc
/// propagate by analyticity instead of hiding in an eigenfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePair {
    pub center: [f64; 2],
    pub radius: f64,
    pub arc: Arc,
}

/// Builds an [`AdmissiblePair`], rejecting radii with k * r >= pi.
pub fn make_admissible(
    k: f64,
    center: [f64; 2],
    radius: f64,
    span: [f64; 2],
) -> Result<AdmissiblePair> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidCurve(format!("bad wavenumber {k}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidCurve(format!("bad radius {radius}")));
    }
    let limit = PI / k;
    if radius >= limit {
        return Err(Error::Admissibility {
            radius,
            limit,
            k,
        });
    }
    let arc = Arc::new(center, radius, span)?;
    Ok(AdmissiblePair {
        center,
        radius,
        arc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample_curves() -> Vec<ClosedCurve> {
        vec![
            ClosedCurve::circle([0.0, 0.0], 2.0).unwrap(),
            ClosedCurve::circle([0.3, -0.4], 0.75).unwrap(),
            ClosedCurve::kite([0.0, 0.0], 1.0).unwrap(),
            ClosedCurve::star_trig([0.0, 0.0], 1.0, vec![0.0, 0.0, 0.2], vec![]).unwrap(),
            ClosedCurve::star_trig([0.1, 0.2], 1.4, vec![0.15, -0.1], vec![0.05, 0.1]).unwrap(),
        ]
    }

    #[test]
    fn evaluate_known_points() {
        let circle = ClosedCurve::circle([0.0, 0.0], 2.0).unwrap();
        let cp = circle.evaluate(0.0);
        assert_relative_eq!(cp.point.x, 2.0, epsilon = 1e-14);
        assert_relative_eq!(cp.point.y, 0.0, epsilon = 1e-14);
        assert_relative_eq!(cp.normal.x, 1.0, epsilon = 1e-14);
        assert_relative_eq!(cp.normal.y, 0.0, epsilon = 1e-14);

        let kite = ClosedCurve::kite([0.0, 0.0], 1.0).unwrap();
        let kp = kite.evaluate(0.0);
        assert_relative_eq!(kp.point.x, 1.0, epsilon = 1e-14);
        assert_relative_eq!(kp.point.y, 0.0, epsilon = 1e-14);

        let star = ClosedCurve::star_trig([0.0, 0.0], 1.0, vec![0.0, 0.0, 0.2], vec![]).unwrap();
        let sp = star.evaluate(PI);
        assert_relative_eq!(sp.point.x, -0.8, epsilon = 1e-12);
        assert_relative_eq!(sp.point.y, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn normals_are_unit_orthogonal_outward() {
        for curve in sample_curves() {
            let quad = quadrature_nodes(&curve, 64).unwrap();
            for (p, nrm) in quad.points.iter().zip(&quad.normals) {
                assert_relative_eq!(nrm.norm(), 1.0, epsilon = 1e-12);
                let outside = p + 1e-4 * nrm;
                let inside = p - 1e-4 * nrm;
                assert!(!curve.contains(&outside), "normal not outward for {curve:?}");
                assert!(curve.contains(&inside));
            }
        }
    }

    #[test]
    fn periodicity_and_speed_on_fine_grid() {
        for curve in sample_curves() {
            for i in 0..512 {
                let t = TAU * i as f64 / 512.0;
                let a = curve.derivatives(t).0;
                let b = curve.derivatives(t + TAU).0;
                assert!((a - b).norm() < 1e-12);
                assert!(curve.evaluate(t).speed > 0.0);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for curve in sample_curves() {
            for i in 0..17 {
                let t = TAU * i as f64 / 17.0;
                let (_, d1, d2) = curve.derivatives(t);
                let h1 = 1e-6;
                let fd1 = (curve.derivatives(t + h1).0 - curve.derivatives(t - h1).0) / (2.0 * h1);
                // Second differences need a larger step to stay above
                // rounding in f64.
                let h2 = 1e-4;
                let pp = curve.derivatives(t + h2).0;
                let pm = curve.derivatives(t - h2).0;
                let p0 = curve.derivatives(t).0;
                let fd2 = (pp.coords + pm.coords - 2.0 * p0.coords) / (h2 * h2);
                assert!((d1 - fd1).norm() < 1e-6 * d1.norm().max(1.0));
                assert!((d2 - fd2).norm() < 1e-5 * d2.norm().max(1.0));
            }
        }
    }

    #[test]
    fn quadrature_basics() {
        let circle = ClosedCurve::circle([0.0, 0.0], 1.0).unwrap();
        let quad = quadrature_nodes(&circle, 8).unwrap();
        assert_eq!(quad.points.len(), 8);
        for w in 0..8 {
            let expected = TAU * w as f64 / 8.0;
            assert_relative_eq!(quad.nodes[w], expected, epsilon = 1e-14);
        }
        // Weight sum over the period.
        assert_relative_eq!(quad.weight * 8.0, TAU, epsilon = 1e-14);
        // Trapezoidal arc length of the unit circle, n = 64.
        let q64 = quadrature_nodes(&circle, 64).unwrap();
        let len: f64 = q64.speeds.iter().map(|s| s * q64.weight).sum();
        assert!((len - TAU).abs() < 1e-12);
        assert!(quadrature_nodes(&circle, 9).is_err());
        assert!(quadrature_nodes(&circle, 6).is_err());
    }

    #[test]
    fn admissibility_rule() {
        // k = 2: pi/k ~ 1.5708, so 1.5 passes and 1.6 fails.
        assert!(make_admissible(2.0, [0.0; 2], 1.5, [0.0, PI]).is_ok());
        assert!(matches!(
            make_admissible(2.0, [0.0; 2], 1.6, [0.0, PI]),
            Err(Error::Admissibility { .. })
        ));
        assert!(make_admissible(1.0, [0.0; 2], 3.0, [0.0, PI / 2.0]).is_ok());
    }

    #[test]
    fn arc_points_open_and_counted() {
        let arc = Arc::new([0.0, 0.0], 1.2, [0.0, PI]).unwrap();
        let pts = arc.points(16);
        assert_eq!(pts.len(), 16);
        for p in &pts {
            assert_relative_eq!((p - Point2::origin()).norm(), 1.2, epsilon = 1e-12);
            assert!(p.y > 0.0); // strictly interior to the open upper arc
        }
        assert!(Arc::new([0.0, 0.0], 1.0, [1.0, 1.0]).is_err());
    }

    #[test]
    fn star_radial_positivity_enforced() {
        assert!(ClosedCurve::star_trig([0.0, 0.0], 0.3, vec![0.0, 0.0, 0.5], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn admissibility_monotone_in_k(k in 0.2f64..4.0, frac in 0.05f64..0.95) {
            let radius = frac * PI / k;
            prop_assert!(make_admissible(k, [0.0; 2], radius, [0.0, PI]).is_ok());
            // Any smaller wavenumber keeps the same radius admissible.
            let k_smaller = 0.5 * k;
            prop_assert!(make_admissible(k_smaller, [0.0; 2], radius, [0.0, PI]).is_ok());
        }

        #[test]
        fn star_curves_have_outward_normals(
            a1 in -0.15f64..0.15,
            b2 in -0.15f64..0.15,
            a3 in -0.15f64..0.15,
        ) {
            let curve = ClosedCurve::star_trig([0.0, 0.0], 1.0, vec![a1, 0.0, a3], vec![0.0, b2]);
            prop_assume!(curve.is_ok());
            let curve = curve.unwrap();
            let quad = quadrature_nodes(&curve, 32).unwrap();
            for (p, nrm) in quad.points.iter().zip(&quad.normals) {
                prop_assert!(!curve.contains(&(p + 1e-5 * nrm)));
                prop_assert!(curve.contains(&(p - 1e-5 * nrm)));
            }
        }
    }
}
