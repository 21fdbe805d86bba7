//! Simulation and verification laboratory for critical branching Brownian
//! particle systems whose branching is correlated through a Gaussian
//! environment, white in time and colored in space.
//!
//! The crate is organized around six subsystems:
//!
//! * [`kernels`] — closed-form and quadrature evaluation of the heat kernel,
//!   its semigroup, time-integrated semigroup, resolvents and Green weights,
//!   plus a randomized inequality suite for the kernel bounds the rest of the
//!   crate relies on.
//! * [`environment`] — sampling of the correlated Gaussian field driving the
//!   branching, as increments at arbitrary particle positions.
//! * [`particle`] — the discrete-time branching particle system itself and
//!   martingale tracking along trajectories.
//! * [`occupation`] — occupation-time accumulation, the mollified density
//!   estimator, and the Tanaka / Green-representation consistency checks.
//! * [`oracles`] — independent Feynman–Kac and quadrature evaluation of the
//!   first and second moment formulas, used as ground truth.
//! * [`regularity`] — structure-function estimation of spatial and temporal
//!   Hölder exponents of the occupation density.

pub mod environment;
pub mod error;
pub mod kernels;
pub mod occupation;
pub mod oracles;
pub mod particle;
pub mod quad;
pub mod regularity;
pub mod space;

mod special;

pub use error::{Error, Result};
pub use space::{Dim, Point};
