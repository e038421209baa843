//! Diffusions in media with a semi-permeable, delaying membrane.
//!
//! The toolkit builds the membrane process by skewing a base diffusion on a
//! surface `S` and applying a random time change, solves the equivalent
//! parabolic transmission problem, assembles the single-layer heat-potential
//! machinery (skew transition densities, Laplace-functional kernels, the
//! resolvent equation on the surface), and statistically verifies the
//! martingale characterization by cross-checking the three routes.

pub mod coeffs;
pub mod config;
pub mod error;
pub mod geometry;
pub mod output;
pub mod pde;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod testfn;
pub mod verify;

pub use coeffs::{ConditionsJReport, DiffusionField, DiffusionSpec, SurfaceField};
pub use error::MembraneError;
pub use geometry::{Side, Surface};
pub use testfn::{TestFunction, TimeBump};
