//! Measurement grids and the three phaseless near-field datasets.
//!
//! Receivers live on an arc of the circle bounding the disk G, sources on an
//! arc of the smaller disk Omega nested inside G; both disks sit strictly
//! inside the cavity and away from the reference ball. The datasets hold
//! |u(x_i, z0)|, |u(x_i, z_j)| and |u(x_i, z0) + u(x_i, z_j)| for a
//! distinguished source z0.
//!
//! Graze sources are an auxiliary block: for selected receivers, extra
//! sources are placed a few separations epsilon inward of the receiver along
//! the inward normal of G's boundary and measured with the same
//! three-modulus protocol against z0. They give phase retrieval a measurable
//! handle on the field's known singular part near coincidence.

use crate::forward::{ReferenceBall, ScatteringConfig, Solver};
use crate::geometry::AdmissiblePair;
use crate::{C64, Error, Result};
use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DATASET_VERSION: u32 = 1;

/// Which receivers get graze sources, and at which separations (fractions of
/// the cavity diameter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrazeSpec {
    pub epsilon_fractions: Vec<f64>,
    /// Every `receiver_stride`-th receiver is paired with graze sources;
    /// 1 pairs all of them.
    pub receiver_stride: usize,
}

impl Default for GrazeSpec {
    fn default() -> Self {
        GrazeSpec {
            epsilon_fractions: vec![1e-2, 1e-3, 1e-4],
            receiver_stride: 1,
        }
    }
}

/// Graze geometry resolved against a concrete receiver set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrazeGrid {
    /// Absolute separations, largest first.
    pub epsilons: Vec<f64>,
    /// Indices into the receiver list, one entry per anchored receiver.
    pub receiver_indices: Vec<usize>,
    /// points[g][l] is the graze source for anchored receiver g at level l.
    pub points: Vec<Vec<[f64; 2]>>,
}

/// Receiver/source geometry for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGrid {
    pub sigma: AdmissiblePair,
    pub gamma: AdmissiblePair,
    pub receivers: Vec<[f64; 2]>,
    pub sources: Vec<[f64; 2]>,
    pub z0: [f64; 2],
    pub graze: Option<GrazeGrid>,
}

impl MeasurementGrid {
    pub fn receiver_points(&self) -> Vec<Point2<f64>> {
        self.receivers.iter().map(|p| Point2::new(p[0], p[1])).collect()
    }

    pub fn source_points(&self) -> Vec<Point2<f64>> {
        self.sources.iter().map(|p| Point2::new(p[0], p[1])).collect()
    }

    pub fn z0_point(&self) -> Point2<f64> {
        Point2::new(self.z0[0], self.z0[1])
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds the measurement grid, enforcing the nesting
/// Omega-bar strictly inside G, G-bar strictly inside the cavity minus the
/// ball, and z0 off the ball and both arcs.
pub fn build_grid(
    config: &ScatteringConfig,
    sigma: AdmissiblePair,
    gamma: AdmissiblePair,
    z0: [f64; 2],
    n_receivers: usize,
    n_sources: usize,
    graze: Option<&GrazeSpec>,
) -> Result<MeasurementGrid> {
    if n_receivers == 0 || n_sources == 0 {
        return Err(Error::Nesting("empty receiver or source grid".into()));
    }
    let diam = config.cavity.diameter();
    let clear = 1e-3 * diam;
    // Omega-bar strictly inside G.
    if dist(gamma.center, sigma.center) + gamma.radius + clear >= sigma.radius {
        return Err(Error::Nesting(format!(
            "source disk (center {:?}, radius {}) not strictly inside receiver disk \
             (center {:?}, radius {})",
            gamma.center, gamma.radius, sigma.center, sigma.radius
        )));
    }
    // G-bar strictly inside the cavity...
    let sigma_center = Point2::new(sigma.center[0], sigma.center[1]);
    if !config.cavity.contains(&sigma_center) {
        return Err(Error::Nesting("receiver disk center outside the cavity".into()));
    }
    if config.cavity.distance_to(&sigma_center) <= sigma.radius + clear {
        return Err(Error::Nesting(
            "receiver disk not strictly inside the cavity".into(),
        ));
    }
    // ...and the ball keeps clear of both measurement circles (it may sit
    // in the hole inside Omega, as in the concentric demo).
    for (name, pair) in [("receiver", &sigma), ("source", &gamma)] {
        let gap = (dist(pair.center, config.ball.center) - pair.radius).abs();
        if gap <= config.ball.radius + clear {
            return Err(Error::Nesting(format!(
                "reference ball touches the {name} circle (gap {gap:.3e})"
            )));
        }
    }
    // z0 in the propagation domain, off both arcs.
    let z0p = Point2::new(z0[0], z0[1]);
    if !config.cavity.contains(&z0p) {
        return Err(Error::Nesting("z0 outside the cavity".into()));
    }
    if dist(z0, config.ball.center) <= config.ball.radius + clear {
        return Err(Error::Nesting("z0 inside or touching the reference ball".into()));
    }
    let receivers: Vec<[f64; 2]> = sigma.arc.points(n_receivers).iter().map(|p| [p.x, p.y]).collect();
    let sources: Vec<[f64; 2]> = gamma.arc.points(n_sources).iter().map(|p| [p.x, p.y]).collect();
    let on_arc_tol = 1e-6 * diam;
    for p in receivers.iter().chain(sources.iter()) {
        if dist(*p, z0) <= on_arc_tol {
            return Err(Error::Nesting(
                "z0 coincides with a receiver or source location".into(),
            ));
        }
    }
    // Keep z0 off the full carrier arcs, not just the sampled points.
    for pair in [&sigma, &gamma] {
        let r = dist(z0, pair.center);
        if (r - pair.radius).abs() <= on_arc_tol {
            let th = (z0[1] - pair.center[1]).atan2(z0[0] - pair.center[0]);
            let th = if th < pair.arc.theta[0] { th + std::f64::consts::TAU } else { th };
            if th >= pair.arc.theta[0] && th <= pair.arc.theta[1] {
                return Err(Error::Nesting("z0 lies on a measurement arc".into()));
            }
        }
    }
    let graze = match graze {
        None => None,
        Some(spec) => {
            if spec.epsilon_fractions.is_empty() || spec.receiver_stride == 0 {
                return Err(Error::Nesting("empty graze specification".into()));
            }
            let mut fractions = spec.epsilon_fractions.clone();
            fractions.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let epsilons: Vec<f64> = fractions.iter().map(|f| f * diam).collect();
            if epsilons.iter().any(|&e| !(e > 0.0) || e >= sigma.radius) {
                return Err(Error::Nesting(format!(
                    "graze separations {epsilons:?} incompatible with receiver disk"
                )));
            }
            let angles = sigma.arc.angles(n_receivers);
            let receiver_indices: Vec<usize> =
                (0..n_receivers).step_by(spec.receiver_stride).collect();
            let points = receiver_indices
                .iter()
                .map(|&i| {
                    let outward = sigma.arc.outward_at(angles[i]);
                    epsilons
                        .iter()
                        .map(|&eps| {
                            [
                                receivers[i][0] - eps * outward.x,
                                receivers[i][1] - eps * outward.y,
                            ]
                        })
                        .collect()
                })
                .collect();
            Some(GrazeGrid {
                epsilons,
                receiver_indices,
                points,
            })
        }
    };
    Ok(MeasurementGrid {
        sigma,
        gamma,
        receivers,
        sources,
        z0,
        graze,
    })
}

/// Noise descriptor attached to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDescriptor {
    pub delta: f64,
    pub seed: u64,
}

/// The three modulus datasets plus the optional graze block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaselessDataset {
    pub version: u32,
    pub k: f64,
    pub ball: ReferenceBall,
    pub grid: MeasurementGrid,
    /// r[i] = |u(x_i, z0)|
    pub r: Vec<f64>,
    /// s[i][j] = |u(x_i, z_j)|
    pub s: Vec<Vec<f64>>,
    /// t[i][j] = |u(x_i, z0) + u(x_i, z_j)|
    pub t: Vec<Vec<f64>>,
    /// graze_s[g][l] = |u(x_p(g), z_g_l)| at the paired receiver
    #[serde(default)]
    pub graze_s: Vec<Vec<f64>>,
    /// graze_t[g][l] = |u(x_p(g), z0) + u(x_p(g), z_g_l)|
    #[serde(default)]
    pub graze_t: Vec<Vec<f64>>,
    pub noise: Option<NoiseDescriptor>,
}

/// Complex near-field values on the grid; simulation-side ground truth used
/// by oracles, the selector symmetry test and the inversion consistency runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearFieldTruth {
    pub at_z0: Vec<(f64, f64)>,
    pub at_sources: Vec<Vec<(f64, f64)>>,
    pub graze: Vec<Vec<(f64, f64)>>,
}

impl NearFieldTruth {
    pub fn z0_value(&self, i: usize) -> C64 {
        C64::new(self.at_z0[i].0, self.at_z0[i].1)
    }

    pub fn value(&self, i: usize, j: usize) -> C64 {
        C64::new(self.at_sources[i][j].0, self.at_sources[i][j].1)
    }

    pub fn graze_value(&self, g: usize, l: usize) -> C64 {
        C64::new(self.graze[g][l].0, self.graze[g][l].1)
    }

    pub fn conjugated(&self) -> NearFieldTruth {
        NearFieldTruth {
            at_z0: self.at_z0.iter().map(|&(re, im)| (re, -im)).collect(),
            at_sources: self
                .at_sources
                .iter()
                .map(|row| row.iter().map(|&(re, im)| (re, -im)).collect())
                .collect(),
            graze: self
                .graze
                .iter()
                .map(|row| row.iter().map(|&(re, im)| (re, -im)).collect())
                .collect(),
        }
    }
}

/// Solves the forward problem for every source on the grid and returns the
/// complex fields at the receivers.
pub fn compute_fields(config: &ScatteringConfig, grid: &MeasurementGrid) -> Result<NearFieldTruth> {
    let solver = Solver::assemble(config.clone())?;
    compute_fields_with(&solver, grid)
}

/// Same as [`compute_fields`] but reusing an assembled solver.
pub fn compute_fields_with(solver: &Solver, grid: &MeasurementGrid) -> Result<NearFieldTruth> {
    let receivers = grid.receiver_points();
    let z0 = grid.z0_point();
    let sol0 = solver.solve(&z0)?;
    let at_z0: Vec<(f64, f64)> = receivers
        .iter()
        .map(|x| sol0.total_field(x).map(|v| (v.re, v.im)))
        .collect::<Result<_>>()?;
    let sources = grid.source_points();
    let sols = solver.solve_many(&sources)?;
    let mut at_sources = vec![vec![(0.0, 0.0); sources.len()]; receivers.len()];
    for (j, sol) in sols.iter().enumerate() {
        for (i, x) in receivers.iter().enumerate() {
            let v = sol.total_field(x)?;
            at_sources[i][j] = (v.re, v.im);
        }
    }
    let mut graze = Vec::new();
    if let Some(g) = &grid.graze {
        for (gi, &ri) in g.receiver_indices.iter().enumerate() {
            let x = receivers[ri];
            let xp = Point2::new(x[0], x[1]);
            let mut row = Vec::with_capacity(g.epsilons.len());
            for l in 0..g.epsilons.len() {
                let zg = Point2::new(g.points[gi][l][0], g.points[gi][l][1]);
                let sol = solver.solve(&zg)?;
                let v = sol.total_field(&xp)?;
                row.push((v.re, v.im));
            }
            graze.push(row);
        }
    }
    Ok(NearFieldTruth {
        at_z0,
        at_sources,
        graze,
    })
}

/// Builds the phaseless dataset from the complex fields. Superposition
/// moduli are computed from the complex sum, never from the moduli.
pub fn dataset_from_fields(
    config: &ScatteringConfig,
    grid: &MeasurementGrid,
    fields: &NearFieldTruth,
) -> PhaselessDataset {
    let n_r = fields.at_z0.len();
    let n_s = fields.at_sources.first().map_or(0, Vec::len);
    let r: Vec<f64> = (0..n_r).map(|i| fields.z0_value(i).norm()).collect();
    let s: Vec<Vec<f64>> = (0..n_r)
        .map(|i| (0..n_s).map(|j| fields.value(i, j).norm()).collect())
        .collect();
    let t: Vec<Vec<f64>> = (0..n_r)
        .map(|i| {
            (0..n_s)
                .map(|j| (fields.z0_value(i) + fields.value(i, j)).norm())
                .collect()
        })
        .collect();
    let mut graze_s = Vec::new();
    let mut graze_t = Vec::new();
    if let Some(g) = &grid.graze {
        for (gi, &ri) in g.receiver_indices.iter().enumerate() {
            let u0 = fields.z0_value(ri);
            let row_s: Vec<f64> = (0..g.epsilons.len())
                .map(|l| fields.graze_value(gi, l).norm())
                .collect();
            let row_t: Vec<f64> = (0..g.epsilons.len())
                .map(|l| (u0 + fields.graze_value(gi, l)).norm())
                .collect();
            graze_s.push(row_s);
            graze_t.push(row_t);
        }
    }
    PhaselessDataset {
        version: DATASET_VERSION,
        k: config.k,
        ball: config.ball.clone(),
        grid: grid.clone(),
        r,
        s,
        t,
        graze_s,
        graze_t,
        noise: None,
    }
}

/// Forward-solves every source and takes moduli: one solve for z0, one per
/// source on Gamma, one per graze source.
pub fn synthesize(config: &ScatteringConfig, grid: &MeasurementGrid) -> Result<PhaselessDataset> {
    let fields = compute_fields(config, grid)?;
    Ok(dataset_from_fields(config, grid, &fields))
}

/// Multiplies every stored modulus by (1 + delta * xi), xi uniform on
/// [-1, 1], independently per entry and deterministically per seed. Negative
/// results clamp to zero.
pub fn add_noise(ds: &PhaselessDataset, delta: f64, seed: u64) -> Result<PhaselessDataset> {
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::NoiseLevel(delta));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    let mut perturb = |v: &mut f64| {
        let xi: f64 = rng.gen_range(-1.0..=1.0);
        *v = (*v * (1.0 + delta * xi)).max(0.0);
    };
    out.r.iter_mut().for_each(&mut perturb);
    out.s.iter_mut().flatten().for_each(&mut perturb);
    out.t.iter_mut().flatten().for_each(&mut perturb);
    out.graze_s.iter_mut().flatten().for_each(&mut perturb);
    out.graze_t.iter_mut().flatten().for_each(&mut perturb);
    out.noise = Some(NoiseDescriptor { delta, seed });
    Ok(out)
}

impl PhaselessDataset {
    pub fn n_receivers(&self) -> usize {
        self.r.len()
    }

    pub fn n_sources(&self) -> usize {
        self.s.first().map_or(0, Vec::len)
    }

    /// Structural validation: dimensions match the grid and all moduli are
    /// finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        if self.version != DATASET_VERSION {
            return Err(Error::Parse {
                context: "dataset".into(),
                message: format!("unsupported version {}", self.version),
            });
        }
        let n_r = self.grid.receivers.len();
        let n_s = self.grid.sources.len();
        if self.r.len() != n_r {
            return Err(Error::Dimension(format!(
                "r has {} entries for {} receivers",
                self.r.len(),
                n_r
            )));
        }
        for (name, m) in [("s", &self.s), ("t", &self.t)] {
            if m.len() != n_r || m.iter().any(|row| row.len() != n_s) {
                return Err(Error::Dimension(format!(
                    "{name} is not {n_r} x {n_s}"
                )));
            }
        }
        match &self.grid.graze {
            Some(g) => {
                let n_g = g.receiver_indices.len();
                let n_l = g.epsilons.len();
                for (name, m) in [("graze_s", &self.graze_s), ("graze_t", &self.graze_t)] {
                    if m.len() != n_g || m.iter().any(|row| row.len() != n_l) {
                        return Err(Error::Dimension(format!("{name} is not {n_g} x {n_l}")));
                    }
                }
                if g.receiver_indices.iter().any(|&i| i >= n_r) {
                    return Err(Error::Dimension("graze receiver index out of range".into()));
                }
            }
            None => {
                if !self.graze_s.is_empty() || !self.graze_t.is_empty() {
                    return Err(Error::Dimension(
                        "graze moduli present without graze geometry".into(),
                    ));
                }
            }
        }
        let all = self
            .r
            .iter()
            .chain(self.s.iter().flatten())
            .chain(self.t.iter().flatten())
            .chain(self.graze_s.iter().flatten())
            .chain(self.graze_t.iter().flatten());
        for v in all {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Parse {
                    context: "dataset".into(),
                    message: format!("modulus {v} is negative or non-finite"),
                });
            }
        }
        Ok(())
    }

    /// Worst triangle-inequality violation max(t - r - s, |r - s| - t) over
    /// the grid; nonpositive for exact data.
    pub fn triangle_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.n_receivers() {
            for j in 0..self.n_sources() {
                let (r, s, t) = (self.r[i], self.s[i][j], self.t[i][j]);
                worst = worst.max(t - r - s).max((r - s).abs() - t);
            }
        }
        worst
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(path.as_ref(), json.as_bytes())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<PhaselessDataset> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(Error::Io)?;
        let ds: PhaselessDataset = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.as_ref().display().to_string(),
            message: e.to_string(),
        })?;
        ds.validate()?;
        Ok(ds)
    }

    /// Sidecar CSV rows (i, j, r, s, t), one per grid entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,r,s,t\n");
        for i in 0..self.n_receivers() {
            for j in 0..self.n_sources() {
                out.push_str(&format!(
                    "{i},{j},{:.17e},{:.17e},{:.17e}\n",
                    self.r[i], self.s[i][j], self.t[i][j]
                ));
            }
        }
        out
    }
}

/// Writes via a sibling temp file and rename so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::forward::BoundaryCondition;
    use crate::geometry::{make_admissible, ClosedCurve};
    use std::f64::consts::PI;

    pub fn demo_config() -> ScatteringConfig {
        ScatteringConfig {
            k: 1.0,
            cavity: ClosedCurve::circle([0.0, 0.0], 2.0).unwrap(),
            bc: BoundaryCondition::SoundSoft,
            ball: ReferenceBall {
                center: [0.0, 0.0],
                radius: 0.3,
                lambda0: 1.0,
            },
            n_cavity: 96,
            n_ball: 48,
            graze_mode: false,
        }
    }

    pub fn demo_grid(config: &ScatteringConfig, n_recv: usize, n_src: usize) -> MeasurementGrid {
        let sigma = make_admissible(config.k, [0.0, 0.0], 1.2, [0.0, PI]).unwrap();
        let gamma = make_admissible(config.k, [0.0, 0.0], 0.7, [0.0, PI]).unwrap();
        build_grid(
            config,
            sigma,
            gamma,
            [0.3, -0.55],
            n_recv,
            n_src,
            Some(&GrazeSpec {
                epsilon_fractions: vec![1e-2, 1e-3, 1e-4],
                receiver_stride: 1,
            }),
        )
        .unwrap()
    }

    #[test]
    fn build_grid_accepts_demo_and_rejects_bad_nesting() {
        let config = demo_config();
        let grid = demo_grid(&config, 8, 4);
        assert_eq!(grid.receivers.len(), 8);
        assert_eq!(grid.sources.len(), 4);
        let g = grid.graze.as_ref().unwrap();
        assert_eq!(g.receiver_indices.len(), 8);
        assert_eq!(g.epsilons.len(), 3);
        // Largest epsilon first, absolute scale = fraction * diameter (4).
        assert!((g.epsilons[0] - 0.04).abs() < 1e-12);
        // Graze points sit at the right distance from their receivers.
        let p = g.points[3][1];
        let x = grid.receivers[3];
        assert!((dist(p, x) - g.epsilons[1]).abs() < 1e-12);

        // Source disk radius 1.3 > receiver disk radius 1.2 is rejected.
        let sigma = make_admissible(config.k, [0.0, 0.0], 1.2, [0.0, PI]).unwrap();
        let gamma_big = make_admissible(config.k, [0.0, 0.0], 1.3, [0.0, PI]).unwrap();
        assert!(matches!(
            build_grid(&config, sigma.clone(), gamma_big, [0.3, -0.55], 8, 4, None),
            Err(Error::Nesting(_))
        ));
        // z0 on the source arc is rejected.
        let gamma = make_admissible(config.k, [0.0, 0.0], 0.7, [0.0, PI]).unwrap();
        assert!(matches!(
            build_grid(
                &config,
                sigma,
                gamma,
                [0.0, 0.7],
                8,
                4,
                None
            ),
            Err(Error::Nesting(_))
        ));
    }

    #[test]
    fn synthesized_dataset_satisfies_identities() {
        let config = demo_config();
        let grid = demo_grid(&config, 6, 3);
        let fields = compute_fields(&config, &grid).unwrap();
        let ds = dataset_from_fields(&config, &grid, &fields);
        ds.validate().unwrap();
        // Parallelogram identity ties t to the forward cross term.
        for i in 0..ds.n_receivers() {
            for j in 0..ds.n_sources() {
                let lhs = ds.t[i][j].powi(2) - ds.r[i].powi(2) - ds.s[i][j].powi(2);
                let rhs = 2.0 * (fields.z0_value(i) * fields.value(i, j).conj()).re;
                assert!(
                    (lhs - rhs).abs() < 1e-12 * (ds.r[i] * ds.s[i][j]).max(1e-12),
                    "parallelogram failed at ({i},{j})"
                );
            }
        }
        assert!(ds.triangle_violation() <= 1e-12);
        // Deterministic synthesis.
        let ds2 = synthesize(&config, &grid).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn phase_invariance_of_moduli() {
        // Multiplying both fields by a common unit factor leaves all three
        // moduli unchanged.
        let u0 = C64::new(0.4, -0.2);
        let u1 = C64::new(-0.1, 0.35);
        let phase = C64::from_polar(1.0, 1.234);
        assert!(((u0 * phase).norm() - u0.norm()).abs() < 1e-15);
        assert!(((u1 * phase).norm() - u1.norm()).abs() < 1e-15);
        assert!((((u0 + u1) * phase).norm() - (u0 + u1).norm()).abs() < 1e-15);
    }

    #[test]
    fn noise_contract() {
        let config = demo_config();
        let grid = demo_grid(&config, 6, 3);
        let ds = synthesize(&config, &grid).unwrap();
        // delta = 0 is the identity.
        let clean = add_noise(&ds, 0.0, 42).unwrap();
        assert_eq!(clean.r, ds.r);
        assert_eq!(clean.s, ds.s);
        // Same seed, same output; different seed, different output.
        let a = add_noise(&ds, 0.01, 7).unwrap();
        let b = add_noise(&ds, 0.01, 7).unwrap();
        let c = add_noise(&ds, 0.01, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.r, c.r);
        // Entrywise relative deviation bounded by delta.
        for (x, y) in ds.s.iter().flatten().zip(a.s.iter().flatten()) {
            assert!((x - y).abs() <= 0.01 * x + 1e-15);
        }
        assert!(add_noise(&ds, -0.1, 0).is_err());
        assert_eq!(a.noise, Some(NoiseDescriptor { delta: 0.01, seed: 7 }));
    }

    #[test]
    fn save_load_round_trip() {
        let config = demo_config();
        let grid = demo_grid(&config, 6, 3);
        let ds = add_noise(&synthesize(&config, &grid).unwrap(), 0.005, 3).unwrap();
        let dir = std::env::temp_dir().join("cavity_core_test_ds");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.json");
        ds.save(&path).unwrap();
        let back = PhaselessDataset::load(&path).unwrap();
        assert_eq!(ds, back);

        // Negative modulus is rejected on load.
        let mut bad = ds.clone();
        bad.r[0] = -1.0;
        let bad_path = dir.join("bad.json");
        std::fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
        assert!(PhaselessDataset::load(&bad_path).is_err());

        // Mismatched dimensions are rejected.
        let mut short = ds.clone();
        short.s[0].pop();
        let short_path = dir.join("short.json");
        std::fs::write(&short_path, serde_json::to_string(&short).unwrap()).unwrap();
        assert!(PhaselessDataset::load(&short_path).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let config = demo_config();
        let grid = demo_grid(&config, 4, 2);
        let ds = synthesize(&config, &grid).unwrap();
        let csv = ds.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i,j,r,s,t");
        assert_eq!(lines.len(), 1 + 4 * 2);
    }
}
