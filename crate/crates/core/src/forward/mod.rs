//! Direct interior scattering solver.
//!
//! The scattered field is represented as a pair of single-layer potentials,
//! one on the cavity boundary and one on the reference ball, with densities
//! coupled through both boundary conditions. Same-curve blocks use the
//! periodic log-weight quadrature for the logarithmic kernel singularity and
//! plain trapezoidal quadrature for the smooth remainder, which is spectrally
//! accurate on analytic curves. The linear system is solved by dense LU with
//! partial pivoting and one step of iterative refinement.
//!
//! Spurious representation resonances (the ball's interior Dirichlet
//! eigenvalues) are detected through the condition estimate and reported as
//! [`Error::Resonance`]; for a Dirichlet cavity the documented fallback is a
//! mixed single+double layer on the cavity boundary.

mod dense;
pub mod oracle;

pub use oracle::concentric_oracle;

use crate::geometry::{quadrature_nodes, ClosedCurve, Quadrature};
use crate::special::{bessel_j, fundamental_2d, grad_fundamental_2d};
use crate::{C64, Error, Result};
use dense::Factorized;
use nalgebra::{DVector, Point2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESONANCE_COND: f64 = 1e12;

/// Complex constant stored as (re, im) so configs stay plain JSON.
pub type ComplexPair = (f64, f64);

/// Impedance function lambda(t) on the cavity boundary: a complex trig
/// polynomial in the boundary parameter. A bare constant is the common case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ImpedanceFn {
    pub constant: ComplexPair,
    #[serde(default)]
    pub cos: Vec<ComplexPair>,
    #[serde(default)]
    pub sin: Vec<ComplexPair>,
}

impl ImpedanceFn {
    pub fn constant(re: f64, im: f64) -> Self {
        ImpedanceFn {
            constant: (re, im),
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> C64 {
        let mut v = C64::new(self.constant.0, self.constant.1);
        for (j, c) in self.cos.iter().enumerate() {
            let w = ((j + 1) as f64 * t).cos();
            v += C64::new(c.0, c.1) * w;
        }
        for (j, s) in self.sin.iter().enumerate() {
            let w = ((j + 1) as f64 * t).sin();
            v += C64::new(s.0, s.1) * w;
        }
        v
    }

    pub fn is_constant(&self) -> bool {
        self.cos.is_empty() && self.sin.is_empty()
    }
}

/// Boundary operator on the cavity: sound-soft (u = 0) or impedance
/// (du/dnu + lambda u = 0 with Im lambda >= 0; Neumann is lambda = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum BoundaryCondition {
    SoundSoft,
    Impedance { lambda: ImpedanceFn },
}

impl BoundaryCondition {
    pub fn impedance_const(re: f64, im: f64) -> Self {
        BoundaryCondition::Impedance {
            lambda: ImpedanceFn::constant(re, im),
        }
    }
}

/// The known artificial obstacle: a disk with boundary condition
/// du/dnu + i lambda0 u = 0, lambda0 > 0, nu pointing out of the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBall {
    pub center: [f64; 2],
    pub radius: f64,
    pub lambda0: f64,
}

impl ReferenceBall {
    pub fn curve(&self) -> ClosedCurve {
        ClosedCurve::Circle {
            center: self.center,
            radius: self.radius,
        }
    }
}

/// Full description of one direct scattering problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub k: f64,
    pub cavity: ClosedCurve,
    pub bc: BoundaryCondition,
    pub ball: ReferenceBall,
    pub n_cavity: usize,
    pub n_ball: usize,
    /// Allows sources as close as 1e-6 * diam to a boundary and doubles the
    /// node counts to keep the quadrature trustworthy.
    #[serde(default)]
    pub graze_mode: bool,
}

impl ScatteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Geometry(format!(
                "wavenumber must be positive, got {}",
                self.k
            )));
        }
        self.cavity.validate()?;
        if !(self.ball.lambda0 > 0.0) {
            return Err(Error::Geometry(format!(
                "ball impedance lambda0 must be positive, got {}",
                self.ball.lambda0
            )));
        }
        if !(self.ball.radius > 0.0) {
            return Err(Error::Geometry("ball radius must be positive".into()));
        }
        let c = Point2::new(self.ball.center[0], self.ball.center[1]);
        if !self.cavity.contains(&c) {
            return Err(Error::Geometry("ball center lies outside the cavity".into()));
        }
        let clearance = self.cavity.distance_to(&c) - self.ball.radius;
        if clearance <= 1e-3 * self.ball.radius {
            return Err(Error::Geometry(format!(
                "ball touches the cavity boundary (clearance {clearance:.3e})"
            )));
        }
        for &(n, name) in &[(self.n_cavity, "n_cavity"), (self.n_ball, "n_ball")] {
            if n < 32 || n % 2 != 0 {
                return Err(Error::Geometry(format!(
                    "{name}: node count {n} must be even and >= 32"
                )));
            }
        }
        if let BoundaryCondition::Impedance { lambda } = &self.bc {
            for i in 0..256 {
                let t = TAU * i as f64 / 256.0;
                if lambda.eval(t).im < -1e-12 {
                    return Err(Error::Geometry(format!(
                        "impedance must satisfy Im(lambda) >= 0; got {} at t = {t:.3}",
                        lambda.eval(t).im
                    )));
                }
            }
        }
        Ok(())
    }

    fn effective_nodes(&self) -> (usize, usize) {
        if self.graze_mode {
            (2 * self.n_cavity, 2 * self.n_ball)
        } else {
            (self.n_cavity, self.n_ball)
        }
    }

    /// Minimum admissible distance from a source to either boundary.
    pub fn source_clearance(&self) -> f64 {
        let diam = self.cavity.diameter();
        if self.graze_mode {
            1e-6 * diam
        } else {
            1e-3 * diam
        }
    }
}

/// Periodic quadrature weights for the kernel ln(4 sin^2((t - s)/2)) on a
/// grid of `n` (even) points; entry d corresponds to node offset |i - j| = d.
fn log_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    (0..n)
        .map(|d| {
            let td = TAU * d as f64 / n as f64;
            let mut s = 0.0;
            for m in 1..half {
                s += (m as f64 * td).cos() / m as f64;
            }
            -(4.0 * PI / n as f64) * s
                - (4.0 * PI / (n as f64 * n as f64)) * (half as f64 * td).cos()
        })
        .collect()
}

/// Log-weight at an arbitrary collocation parameter t against node t_j.
fn log_weight_at(n: usize, t: f64, t_j: f64) -> f64 {
    let half = n / 2;
    let d = t - t_j;
    let mut s = 0.0;
    for m in 1..half {
        s += (m as f64 * d).cos() / m as f64;
    }
    -(4.0 * PI / n as f64) * s - (4.0 * PI / (n as f64 * n as f64)) * (half as f64 * d).cos()
}

/// Trigonometric interpolation weight L_j(t) on an even n-point grid.
fn interp_weight(n: usize, t: f64, t_j: f64) -> f64 {
    let half = n / 2;
    let d = t - t_j;
    let mut s = 1.0;
    for m in 1..half {
        s += 2.0 * (m as f64 * d).cos();
    }
    s += (half as f64 * d).cos();
    s / n as f64
}

fn ln_4sin2(dt: f64) -> f64 {
    let s = (0.5 * dt).sin();
    (4.0 * s * s).ln()
}

/// J_1(z)/z, stable near z = 0.
fn j1_over_z(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let q = z * z;
        0.5 - q / 16.0 + q * q / 384.0
    } else {
        bessel_j(1, z).expect("argument within caps") / z
    }
}

/// Geometry and node data shared by the factorization and field evaluation.
pub struct SolverShared {
    pub config: ScatteringConfig,
    quad_d: Quadrature,
    quad_b: Quadrature,
    d2_d: Vec<Vector2<f64>>,
    d2_b: Vec<Vector2<f64>>,
    lambda_d: Vec<C64>,
    ball_curve: ClosedCurve,
    /// Minimum distances from evaluation points to each boundary for the
    /// layer-potential quadrature to be trusted.
    pub eval_clearance_cavity: f64,
    pub eval_clearance_ball: f64,
}

struct CurveData<'a> {
    quad: &'a Quadrature,
    d2: &'a [Vector2<f64>],
}

impl SolverShared {
    fn new(config: ScatteringConfig) -> Result<Self> {
        config.validate()?;
        let (n_d, n_b) = config.effective_nodes();
        let ball_curve = config.ball.curve();
        let quad_d = quadrature_nodes(&config.cavity, n_d)?;
        let quad_b = quadrature_nodes(&ball_curve, n_b)?;
        let d2_d = quad_d
            .nodes
            .iter()
            .map(|&t| config.cavity.derivatives(t).2)
            .collect();
        let d2_b = quad_b
            .nodes
            .iter()
            .map(|&t| ball_curve.derivatives(t).2)
            .collect();
        let lambda_d = quad_d
            .nodes
            .iter()
            .map(|&t| match &config.bc {
                BoundaryCondition::SoundSoft => C64::new(0.0, 0.0),
                BoundaryCondition::Impedance { lambda } => lambda.eval(t),
            })
            .collect();
        let spacing_d = quad_d.speeds.iter().cloned().fold(0.0, f64::max) * quad_d.weight;
        let spacing_b = quad_b.speeds.iter().cloned().fold(0.0, f64::max) * quad_b.weight;
        Ok(SolverShared {
            config,
            quad_d,
            quad_b,
            d2_d,
            d2_b,
            lambda_d,
            ball_curve,
            eval_clearance_cavity: 2.0 * spacing_d,
            eval_clearance_ball: 2.0 * spacing_b,
        })
    }

    fn n_d(&self) -> usize {
        self.quad_d.points.len()
    }

    fn n_b(&self) -> usize {
        self.quad_b.points.len()
    }

    fn k(&self) -> f64 {
        self.config.k
    }

    /// Single-layer kernel split on one curve: (log factor M1, remainder M2)
    /// at node pair (i, j), speed of node j folded in.
    fn single_layer_split(&self, data: &CurveData, i: usize, j: usize) -> (f64, C64) {
        let k = self.k();
        let quad = data.quad;
        if i == j {
            let sp = quad.speeds[i];
            let m2 = C64::new(-(EULER_GAMMA + (0.5 * k * sp).ln()) / (2.0 * PI), 0.25) * sp;
            (-(1.0 / (4.0 * PI)) * sp, m2)
        } else {
            let r = (quad.points[i] - quad.points[j]).norm();
            let m1 =
                -(1.0 / (4.0 * PI)) * bessel_j(0, k * r).expect("within caps") * quad.speeds[j];
            let phi = fundamental_2d(k, &quad.points[i], &quad.points[j]).expect("distinct nodes");
            let m2 =
                phi * quad.speeds[j] - C64::new(m1 * ln_4sin2(quad.nodes[i] - quad.nodes[j]), 0.0);
            (m1, m2)
        }
    }

    /// Normal-derivative (adjoint double layer) kernel split on one curve.
    fn normal_deriv_split(&self, data: &CurveData, i: usize, j: usize) -> (f64, C64) {
        let k = self.k();
        let quad = data.quad;
        if i == j {
            let n2 = data.d2[i].dot(&quad.normals[i]) / (4.0 * PI * quad.speeds[i]);
            (0.0, C64::new(n2, 0.0))
        } else {
            let diff = quad.points[i] - quad.points[j];
            let r = diff.norm();
            let dot = diff.dot(&quad.normals[i]);
            let n1 = k / (4.0 * PI) * j1_over_z(k * r) * k * dot * quad.speeds[j];
            let grad = grad_fundamental_2d(k, &quad.points[i], &quad.points[j]).expect("distinct");
            let full = (grad.x * quad.normals[i].x + grad.y * quad.normals[i].y) * quad.speeds[j];
            let n2 = full - C64::new(n1 * ln_4sin2(quad.nodes[i] - quad.nodes[j]), 0.0);
            (n1, n2)
        }
    }

    /// Dense system matrix in row-major order; rows are cavity collocation
    /// points followed by ball collocation points.
    fn assemble_matrix(&self) -> Vec<C64> {
        let n_d = self.n_d();
        let n_b = self.n_b();
        let n = n_d + n_b;
        let k = self.k();
        let rd = log_weights(n_d);
        let rb = log_weights(n_b);
        let w_d = self.quad_d.weight;
        let w_b = self.quad_b.weight;
        let dat_d = CurveData {
            quad: &self.quad_d,
            d2: &self.d2_d,
        };
        let dat_b = CurveData {
            quad: &self.quad_b,
            d2: &self.d2_b,
        };
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        let i_lam0 = C64::new(0.0, self.config.ball.lambda0);
        entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            if i < n_d {
                // Cavity row: sound-soft trace, or impedance trace from
                // inside the cavity (+1/2 density jump).
                let soft = matches!(self.config.bc, BoundaryCondition::SoundSoft);
                let lam = self.lambda_d[i];
                for j in 0..n_d {
                    let dist = (i + n_d - j) % n_d;
                    let (m1, m2) = self.single_layer_split(&dat_d, i, j);
                    let s_entry = C64::new(rd[dist] * m1, 0.0) + m2 * w_d;
                    row[j] = if soft {
                        s_entry
                    } else {
                        let (n1, n2) = self.normal_deriv_split(&dat_d, i, j);
                        let kp = C64::new(rd[dist] * n1, 0.0) + n2 * w_d;
                        let jump = if i == j {
                            C64::new(0.5, 0.0)
                        } else {
                            C64::new(0.0, 0.0)
                        };
                        kp + jump + lam * s_entry
                    };
                }
                for j in 0..n_b {
                    let phi = fundamental_2d(k, &self.quad_d.points[i], &self.quad_b.points[j])
                        .expect("disjoint boundaries");
                    let val = if soft {
                        phi
                    } else {
                        let g = grad_fundamental_2d(
                            k,
                            &self.quad_d.points[i],
                            &self.quad_b.points[j],
                        )
                        .expect("disjoint");
                        g.x * self.quad_d.normals[i].x
                            + g.y * self.quad_d.normals[i].y
                            + lam * phi
                    };
                    row[n_d + j] = val * (w_b * self.quad_b.speeds[j]);
                }
            } else {
                // Ball row: impedance trace from outside the ball
                // (-1/2 density jump).
                let ib = i - n_d;
                for j in 0..n_d {
                    let phi = fundamental_2d(k, &self.quad_b.points[ib], &self.quad_d.points[j])
                        .expect("disjoint boundaries");
                    let g =
                        grad_fundamental_2d(k, &self.quad_b.points[ib], &self.quad_d.points[j])
                            .expect("disjoint");
                    let val = g.x * self.quad_b.normals[ib].x
                        + g.y * self.quad_b.normals[ib].y
                        + i_lam0 * phi;
                    row[j] = val * (w_d * self.quad_d.speeds[j]);
                }
                for j in 0..n_b {
                    let dist = (ib + n_b - j) % n_b;
                    let (m1, m2) = self.single_layer_split(&dat_b, ib, j);
                    let s_entry = C64::new(rb[dist] * m1, 0.0) + m2 * w_b;
                    let (n1, n2) = self.normal_deriv_split(&dat_b, ib, j);
                    let kp = C64::new(rb[dist] * n1, 0.0) + n2 * w_b;
                    let jump = if ib == j {
                        C64::new(-0.5, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    row[n_d + j] = kp + jump + i_lam0 * s_entry;
                }
            }
        });
        entries
    }

    /// Right-hand side for a point source at z: minus the incident traces.
    fn rhs(&self, z: &Point2<f64>) -> Result<DVector<C64>> {
        let n_d = self.n_d();
        let n_b = self.n_b();
        let k = self.k();
        let mut b = DVector::<C64>::zeros(n_d + n_b);
        let soft = matches!(self.config.bc, BoundaryCondition::SoundSoft);
        for i in 0..n_d {
            let phi = fundamental_2d(k, &self.quad_d.points[i], z)?;
            b[i] = if soft {
                -phi
            } else {
                let g = grad_fundamental_2d(k, &self.quad_d.points[i], z)?;
                -(g.x * self.quad_d.normals[i].x
                    + g.y * self.quad_d.normals[i].y
                    + self.lambda_d[i] * phi)
            };
        }
        let i_lam0 = C64::new(0.0, self.config.ball.lambda0);
        for i in 0..n_b {
            let phi = fundamental_2d(k, &self.quad_b.points[i], z)?;
            let g = grad_fundamental_2d(k, &self.quad_b.points[i], z)?;
            b[n_d + i] = -(g.x * self.quad_b.normals[i].x
                + g.y * self.quad_b.normals[i].y
                + i_lam0 * phi);
        }
        Ok(b)
    }

    /// Checks that a source sits in the propagation domain with clearance.
    pub fn check_source(&self, z: &Point2<f64>) -> Result<()> {
        if !self.config.cavity.contains(z) {
            return Err(Error::Geometry(format!("source {z:?} outside the cavity")));
        }
        let b_center = Point2::new(self.config.ball.center[0], self.config.ball.center[1]);
        if (z - b_center).norm() <= self.config.ball.radius {
            return Err(Error::Geometry(format!(
                "source {z:?} inside the reference ball"
            )));
        }
        let min = self.config.source_clearance();
        let dist = self
            .config
            .cavity
            .distance_to(z)
            .min((z - b_center).norm() - self.config.ball.radius);
        if dist <= min {
            let hint = if self.config.graze_mode {
                String::new()
            } else {
                "(enable graze_mode to allow closer sources)".into()
            };
            return Err(Error::SourceTooClose { dist, min, hint });
        }
        Ok(())
    }

    /// Checks that a field evaluation point is inside the propagation domain
    /// and far enough from both boundaries for the quadrature.
    pub fn check_eval_point(&self, x: &Point2<f64>) -> Result<()> {
        if !self.config.cavity.contains(x) {
            return Err(Error::Geometry(format!("point {x:?} outside the cavity")));
        }
        let b_center = Point2::new(self.config.ball.center[0], self.config.ball.center[1]);
        let to_ball = (x - b_center).norm() - self.config.ball.radius;
        if to_ball <= 0.0 {
            return Err(Error::Geometry(format!("point {x:?} inside the ball")));
        }
        let to_cavity = self.config.cavity.distance_to(x);
        if to_cavity <= self.eval_clearance_cavity {
            return Err(Error::NearBoundary {
                dist: to_cavity,
                min: self.eval_clearance_cavity,
            });
        }
        if to_ball <= self.eval_clearance_ball {
            return Err(Error::NearBoundary {
                dist: to_ball,
                min: self.eval_clearance_ball,
            });
        }
        Ok(())
    }
}

/// Assembled and factorized scattering operator for one configuration;
/// reusable across any number of point sources.
pub struct Solver {
    shared: Arc<SolverShared>,
    factor: Factorized,
}

/// Solved layer densities for one source, with solve diagnostics.
pub struct DensitySolution {
    shared: Arc<SolverShared>,
    pub source: Point2<f64>,
    pub density_cavity: Vec<C64>,
    pub density_ball: Vec<C64>,
    /// Relative residual of the refined linear solve.
    pub residual: f64,
    /// 1-norm condition number of the assembled system.
    pub cond: f64,
}

impl Solver {
    /// Assembles the dense operator and factorizes it.
    pub fn assemble(config: ScatteringConfig) -> Result<Self> {
        let shared = Arc::new(SolverShared::new(config)?);
        let n = shared.n_d() + shared.n_b();
        let entries = shared.assemble_matrix();
        debug_assert!(entries.iter().all(|e| e.re.is_finite() && e.im.is_finite()));
        let matrix = nalgebra::DMatrix::from_row_slice(n, n, &entries);
        let factor = Factorized::new(matrix)?;
        if factor.cond_one() > RESONANCE_COND {
            return Err(Error::Resonance {
                cond: factor.cond_one(),
            });
        }
        Ok(Solver { shared, factor })
    }

    pub fn config(&self) -> &ScatteringConfig {
        &self.shared.config
    }

    pub fn shared(&self) -> &Arc<SolverShared> {
        &self.shared
    }

    pub fn cond_estimate(&self) -> f64 {
        self.factor.cond_one()
    }

    /// Solves for the layer densities generated by a point source at z.
    pub fn solve(&self, z: &Point2<f64>) -> Result<DensitySolution> {
        self.shared.check_source(z)?;
        let b = self.shared.rhs(z)?;
        let (x, residual) = self.factor.solve(&b)?;
        let n_d = self.shared.n_d();
        Ok(DensitySolution {
            shared: Arc::clone(&self.shared),
            source: *z,
            density_cavity: x.as_slice()[..n_d].to_vec(),
            density_ball: x.as_slice()[n_d..].to_vec(),
            residual,
            cond: self.factor.cond_one(),
        })
    }

    /// Solves many sources against the shared factorization, in parallel.
    pub fn solve_many(&self, sources: &[Point2<f64>]) -> Result<Vec<DensitySolution>> {
        sources.par_iter().map(|z| self.solve(z)).collect()
    }
}

/// One-shot assemble + solve.
pub fn solve_scatter(config: ScatteringConfig, z: &Point2<f64>) -> Result<DensitySolution> {
    Solver::assemble(config)?.solve(z)
}

impl DensitySolution {
    pub fn config(&self) -> &ScatteringConfig {
        &self.shared.config
    }

    /// Scattered field at an interior point.
    pub fn scattered_field(&self, x: &Point2<f64>) -> Result<C64> {
        self.shared.check_eval_point(x)?;
        Ok(self.scattered_unchecked(x))
    }

    pub(crate) fn scattered_unchecked(&self, x: &Point2<f64>) -> C64 {
        let sh = &self.shared;
        let k = sh.k();
        let mut acc = C64::new(0.0, 0.0);
        for (j, psi) in self.density_cavity.iter().enumerate() {
            let phi = fundamental_2d(k, x, &sh.quad_d.points[j]).expect("off boundary");
            acc += phi * psi * (sh.quad_d.weight * sh.quad_d.speeds[j]);
        }
        for (j, psi) in self.density_ball.iter().enumerate() {
            let phi = fundamental_2d(k, x, &sh.quad_b.points[j]).expect("off boundary");
            acc += phi * psi * (sh.quad_b.weight * sh.quad_b.speeds[j]);
        }
        acc
    }

    /// Total field u = u^i + u^s at an interior point (x distinct from the
    /// source).
    pub fn total_field(&self, x: &Point2<f64>) -> Result<C64> {
        let ui = fundamental_2d(self.shared.k(), x, &self.source)?;
        Ok(ui + self.scattered_field(x)?)
    }

    /// Maximum relative boundary-condition residual sampled at `per_curve`
    /// off-node points on each boundary.
    pub fn boundary_residual(&self, per_curve: usize) -> Result<f64> {
        let sh = &self.shared;
        let k = sh.k();
        let scale = self.incident_scale();
        let mut worst = 0.0f64;
        let n_d = sh.n_d();
        for m in 0..per_curve {
            let t = TAU * (m as f64 + 0.37) / per_curve as f64;
            let cp = sh.config.cavity.evaluate(t);
            let (value, deriv) = self.traces_at(&sh.config.cavity, &sh.quad_d, &sh.quad_b, t, true)?;
            let ui = fundamental_2d(k, &cp.point, &self.source)?;
            let residual = match &sh.config.bc {
                BoundaryCondition::SoundSoft => value + ui,
                BoundaryCondition::Impedance { lambda } => {
                    let gi = grad_fundamental_2d(k, &cp.point, &self.source)?;
                    let dui = gi.x * cp.normal.x + gi.y * cp.normal.y;
                    // +1/2 jump for the interior trace, applied to the
                    // trigonometric interpolant of the cavity density.
                    let psi_t: C64 = (0..n_d)
                        .map(|j| self.density_cavity[j] * interp_weight(n_d, t, sh.quad_d.nodes[j]))
                        .sum();
                    deriv + psi_t * 0.5 + lambda.eval(t) * (value + ui) + dui
                }
            };
            worst = worst.max(residual.norm() / scale);
        }
        let n_b = sh.n_b();
        for m in 0..per_curve {
            let t = TAU * (m as f64 + 0.37) / per_curve as f64;
            let cp = sh.ball_curve.evaluate(t);
            let (value, deriv) = self.traces_at(&sh.ball_curve, &sh.quad_b, &sh.quad_d, t, false)?;
            let ui = fundamental_2d(k, &cp.point, &self.source)?;
            let gi = grad_fundamental_2d(k, &cp.point, &self.source)?;
            let dui = gi.x * cp.normal.x + gi.y * cp.normal.y;
            let psi_t: C64 = (0..n_b)
                .map(|j| self.density_ball[j] * interp_weight(n_b, t, sh.quad_b.nodes[j]))
                .sum();
            let i_lam0 = C64::new(0.0, sh.config.ball.lambda0);
            let residual = deriv - psi_t * 0.5 + i_lam0 * (value + ui) + dui;
            worst = worst.max(residual.norm() / scale);
        }
        Ok(worst)
    }

    /// Value and normal-derivative principal value of both layer potentials
    /// at parameter t of the "own" curve. `own_is_cavity` selects which
    /// density lives on it.
    fn traces_at(
        &self,
        curve: &ClosedCurve,
        own_quad: &Quadrature,
        other_quad: &Quadrature,
        t: f64,
        own_is_cavity: bool,
    ) -> Result<(C64, C64)> {
        let sh = &self.shared;
        let k = sh.k();
        let cp = curve.evaluate(t);
        let n_own = own_quad.points.len();
        let (own_density, other_density): (&[C64], &[C64]) = if own_is_cavity {
            (&self.density_cavity, &self.density_ball)
        } else {
            (&self.density_ball, &self.density_cavity)
        };
        let mut value = C64::new(0.0, 0.0);
        let mut deriv = C64::new(0.0, 0.0);
        for j in 0..n_own {
            let tj = own_quad.nodes[j];
            let rw = log_weight_at(n_own, t, tj);
            let r = (cp.point - own_quad.points[j]).norm();
            let m1 = -(1.0 / (4.0 * PI)) * bessel_j(0, k * r)? * own_quad.speeds[j];
            let phi = fundamental_2d(k, &cp.point, &own_quad.points[j])?;
            let m2 = phi * own_quad.speeds[j] - C64::new(m1 * ln_4sin2(t - tj), 0.0);
            value += C64::new(rw * m1, 0.0) * own_density[j] + m2 * own_density[j] * own_quad.weight;

            let diff = cp.point - own_quad.points[j];
            let dot = diff.dot(&cp.normal);
            let n1 = k / (4.0 * PI) * j1_over_z(k * r) * k * dot * own_quad.speeds[j];
            let grad = grad_fundamental_2d(k, &cp.point, &own_quad.points[j])?;
            let full = (grad.x * cp.normal.x + grad.y * cp.normal.y) * own_quad.speeds[j];
            let n2 = full - C64::new(n1 * ln_4sin2(t - tj), 0.0);
            deriv += C64::new(rw * n1, 0.0) * own_density[j] + n2 * own_density[j] * own_quad.weight;
        }
        for j in 0..other_quad.points.len() {
            let phi = fundamental_2d(k, &cp.point, &other_quad.points[j])?;
            let grad = grad_fundamental_2d(k, &cp.point, &other_quad.points[j])?;
            let w = other_quad.weight * other_quad.speeds[j];
            value += phi * other_density[j] * w;
            deriv += (grad.x * cp.normal.x + grad.y * cp.normal.y) * other_density[j] * w;
        }
        Ok((value, deriv))
    }

    /// Scale of the incident field on the cavity boundary, used to normalize
    /// residuals.
    pub fn incident_scale(&self) -> f64 {
        let sh = &self.shared;
        sh.quad_d
            .points
            .iter()
            .map(|p| {
                fundamental_2d(sh.k(), p, &self.source)
                    .map(|v| v.norm())
                    .unwrap_or(0.0)
            })
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE)
    }
}

/// Relative asymmetry of the scattered field under swapping source and
/// receiver: |u^s(x, z) - u^s(z, x)| / max(|u^s(x, z)|, eps). Requires two
/// solves against the same factorization.
pub fn reciprocity_residual(solver: &Solver, x: &Point2<f64>, z: &Point2<f64>) -> Result<f64> {
    if (x - z).norm() == 0.0 {
        return Err(Error::Singularity);
    }
    let sol_z = solver.solve(z)?;
    let sol_x = solver.solve(x)?;
    let uxz = sol_z.scattered_field(x)?;
    let uzx = sol_x.scattered_field(z)?;
    Ok((uxz - uzx).norm() / uxz.norm().max(1e-300))
}

/// Condition numbers of the discrete operator over a wavenumber sweep.
///
/// With `ball: None` only the cavity block is assembled (sound-soft trace),
/// which degenerates exactly at the interior Dirichlet eigenvalues; the
/// absorbing ball removes those spikes.
pub fn condition_sweep(
    cavity: &ClosedCurve,
    bc: &BoundaryCondition,
    ball: Option<&ReferenceBall>,
    ks: &[f64],
    n_cavity: usize,
    n_ball: usize,
) -> Result<Vec<f64>> {
    ks.iter()
        .map(|&k| {
            match ball {
                Some(b) => {
                    let shared = SolverShared::new(ScatteringConfig {
                        k,
                        cavity: cavity.clone(),
                        bc: bc.clone(),
                        ball: b.clone(),
                        n_cavity,
                        n_ball,
                        graze_mode: false,
                    })?;
                    let n = shared.n_d() + shared.n_b();
                    let entries = shared.assemble_matrix();
                    let matrix = nalgebra::DMatrix::from_row_slice(n, n, &entries);
                    Ok(Factorized::new(matrix)?.cond_one())
                }
                None => {
                    // Cavity-only system; a throwaway distant ball supplies
                    // the shared plumbing but its block is dropped.
                    let shared = SolverShared::new(ScatteringConfig {
                        k,
                        cavity: cavity.clone(),
                        bc: bc.clone(),
                        ball: ReferenceBall {
                            center: centroid(cavity),
                            radius: 1e-3 * cavity.diameter(),
                            lambda0: 1.0,
                        },
                        n_cavity,
                        n_ball: 32,
                        graze_mode: false,
                    })?;
                    let n_d = shared.n_d();
                    let full = shared.assemble_matrix();
                    let n = n_d + shared.n_b();
                    let mut entries = Vec::with_capacity(n_d * n_d);
                    for i in 0..n_d {
                        entries.extend_from_slice(&full[i * n..i * n + n_d]);
                    }
                    let matrix = nalgebra::DMatrix::from_row_slice(n_d, n_d, &entries);
                    Ok(Factorized::new(matrix)?.cond_one())
                }
            }
        })
        .collect()
}

fn centroid(curve: &ClosedCurve) -> [f64; 2] {
    let n = 128;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = curve.derivatives(TAU * i as f64 / n as f64).0;
        cx += p.x;
        cy += p.y;
    }
    [cx / n as f64, cy / n as f64]
}
