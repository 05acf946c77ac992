//! Simulator and solver toolkit for a two-type interacting jump process.
//!
//! Particles of two types perform random jumps on a periodic torus; a
//! particle of one type is repelled by particles of the other type through a
//! nonnegative integrable potential that damps the jump rate toward crowded
//! destinations. Same-type particles do not interact. The crate implements
//! this system at two levels and connects them:
//!
//! - [`particles`] — exact continuous-time Monte Carlo (Gillespie sampling
//!   with thinning) of the microscopic dynamics.
//! - [`kinetic`] — the mean-field density equations: direct Runge-Kutta
//!   integration and a windowed fixed-point (Picard) construction with
//!   a-priori positivity and growth-envelope checks.
//! - [`stationary`] — constant stationary states, the symmetric-case
//!   bifurcation, stability classification, and the dispersion relation of
//!   spatial perturbations.
//! - [`mesoscale`] — the scaling experiment: shrink the potentials, grow the
//!   particle density, and measure convergence of rescaled empirical
//!   densities to the kinetic solution.
//! - [`guarantees`] — closed-form well-posedness constants (time horizons,
//!   scale increments, operator-norm bounds) as a reference calculator.
//! - [`kernels`] — the shared kernel families, periodic grids, and
//!   FFT-backed periodic convolution.
//!
//! Start with the runnable examples (`cargo run --release --example ...`):
//! each major capability has one. A thin `wrjump` binary exposes the same
//! pipelines as config-driven subcommands.

pub mod app;
pub mod config;
pub mod error;
pub mod guarantees;
pub mod io;
pub mod kernels;
pub mod kinetic;
pub mod mesoscale;
pub mod particles;
pub mod seeds;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{Field, GridSpec, KernelFamily, KernelSpec};
pub use kinetic::{DensityPair, KineticRunConfig, ModelParams};
