//! Interior acoustic scattering in 2D with an absorbing reference ball.
//!
//! The crate simulates point-source scattering inside a closed cavity that
//! contains a small impedance ball, synthesizes modulus-only (phaseless)
//! near-field measurements on an interior arc, recovers the complex field
//! from those moduli, and reconstructs the cavity boundary and its boundary
//! condition from the recovered field.
//!
//! Module map:
//! - [`geometry`]: parametrized closed curves, measurement arcs, quadrature.
//! - [`special`]: Bessel/Hankel functions and Helmholtz fundamental solutions.
//! - [`forward`]: Nyström boundary-integral solver plus a concentric-disk
//!   series oracle.
//! - [`measurement`]: receiver/source grids, the three modulus datasets,
//!   noise and persistence.
//! - [`retrieval`]: phase retrieval from the modulus triples, branch
//!   construction and exclusion.
//! - [`inverse`]: Gauss–Newton shape reconstruction and boundary-condition
//!   classification.
//! - [`verify`]: the end-to-end verification suites used by the CLI and the
//!   acceptance tests.

pub mod error;
pub mod forward;
pub mod geometry;
pub mod inverse;
pub mod measurement;
pub mod retrieval;
pub mod special;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
