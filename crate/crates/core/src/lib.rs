//! Simulation laboratory for a Brownian directed polymer in a Poissonian medium.
//!
//! The crate samples the model exactly at event times: environments are
//! space-time Poisson clouds on a truncated box, paths are Brownian motions
//! evaluated at the union of event and observation times, and every estimator
//! downstream is an exact function of those samples. There is no
//! time-discretization parameter anywhere in the core; quadrature only enters
//! where an operation is defined through an integral (and says so).
//!
//! Module map:
//! - [`environment`]: Poisson clouds, transforms (shift/shear/reverse/superpose),
//!   Mecke identity checks, tilted sampling by thinning.
//! - [`geometry`]: tube cross-sections, ball radii, overlap volumes, `lambda`.
//! - [`paths`]: exact Brownian sampling (free, bridge, sheared, mirror-coupled)
//!   and hit counting against an environment.
//! - [`gibbs`]: the empirical polymer measure and its observables (partition
//!   functions, free energies, overlaps, favorite path, tilted functionals).
//! - [`doob`]: the compensator decomposition of `-ln W_t` and the
//!   negligible/predominant set classification.
//! - [`fluct`]: variance and concentration diagnostics for `ln Z_t`.
//! - [`chaos`]: factorial measures, multiple compensated integrals, the chaos
//!   expansion, continuum second moments, the weak-form heat-equation check,
//!   and the intermediate-disorder crossover.
//! - [`fastsim`]: sliced lazy-bridge path simulation for large horizons.

pub mod chaos;
pub mod crossover;
pub mod doob;
pub mod environment;
pub mod error;
pub mod estimate;
pub mod fastsim;
pub mod fluct;
pub mod geometry;
pub mod gibbs;
pub mod numerics;
pub mod paths;
pub mod rng;
pub mod she;
pub mod stats;
pub mod tilt;

pub use error::PolyError;
pub use estimate::{Estimate, Method};

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, PolyError>;
