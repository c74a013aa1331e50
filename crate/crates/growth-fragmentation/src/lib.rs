//! Principal eigenpairs of growth-fragmentation operators.
//!
//! The operator acts on size densities u(x) on (0, R):
//!
//! ```text
//!   (A u)(x) = -d/dx (tau(x) u(x)) - beta(x) u(x) + 2 int beta(y) kappa(x, y) u(y) dy
//! ```
//!
//! where `tau` is the growth (polymerization) rate, `beta` the division
//! (fragmentation) rate, and `kappa` the fragment-size kernel. The library
//! computes the dominant eigenvalue and its positive eigenvector under a
//! scalar modulation of either rate: `alpha * tau` (polymerization mode) or
//! `a_f * beta` together with the gain term (fragmentation mode).
//!
//! Modules mirror the pipeline: [`coefficients`] describes problems and
//! checks model assumptions, [`grid`] discretizes them with an upwind scheme,
//! [`eigensolver`] runs the normalized semi-implicit power iteration plus a
//! dense cross-check, [`rescale`] maps extreme modulation values onto bounded
//! self-similar problems, [`analysis`] builds parameter sweeps, limit-law and
//! expansion reports, steady-state finders and the sonication optimizer, and
//! [`driver`] wires everything to the `gfsolve` binary.

pub mod analysis;
pub mod coefficients;
pub mod config;
pub mod driver;
pub mod eigensolver;
pub mod error;
pub mod grid;
pub mod output;
pub mod rescale;

pub use error::{Error, Result};
