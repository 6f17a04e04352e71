//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Curve parameters are non-finite, degenerate or self-intersecting.
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    /// Disk radius is too large for the wavenumber: the first Dirichlet
    /// eigenvalue of the disk would drop below k².
    #[error("admissibility violation: radius {radius} >= pi/k = {limit} (k = {k})")]
    Admissibility { radius: f64, limit: f64, k: f64 },

    /// Quadrature and assembly require even node counts.
    #[error("node count {0} must be even and >= {1}")]
    BadNodeCount(usize, usize),

    /// Boundaries (cavity, ball) intersect or violate clearance.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A required nesting of measurement regions fails.
    #[error("configuration error: {0}")]
    Nesting(String),

    /// Special-function domain violations (Y_n needs x > 0, order/argument caps).
    #[error("special-function domain error: {0}")]
    SpecialDomain(String),

    /// Fundamental solution evaluated at coincident points.
    #[error("singularity: evaluation point coincides with the source")]
    Singularity,

    /// The discrete system is numerically singular. For a Dirichlet cavity a
    /// mixed single+double layer representation on the outer boundary removes
    /// the spurious resonance; see the forward module docs.
    #[error(
        "resonance: condition estimate {cond:.3e} exceeds 1e12; the layer representation is \
         resonant at this wavenumber — fall back to a mixed single+double layer on the cavity"
    )]
    Resonance { cond: f64 },

    /// Point source placed too close to a solver boundary.
    #[error("source at distance {dist:.3e} from a boundary; minimum is {min:.3e} {hint}")]
    SourceTooClose { dist: f64, min: f64, hint: String },

    /// Field evaluation too close to a boundary for the quadrature to be trusted.
    #[error("evaluation point at distance {dist:.3e} from a boundary; minimum is {min:.3e}")]
    NearBoundary { dist: f64, min: f64 },

    /// Phaseless data violates a structural invariant.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Graze data absent or too weak to anchor the per-receiver phase.
    #[error("anchor unavailable: {0}")]
    AnchorUnavailable(String),

    /// Noise level must be nonnegative.
    #[error("invalid noise level {0}")]
    NoiseLevel(f64),

    /// Dataset or config file failed validation.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// Array dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Operation only defined for a restricted geometry.
    #[error("unsupported geometry: {0}")]
    Unsupported(String),

    /// Linear solve or optimization failed beyond recovery.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
