//! Incompressible Bingham flow in 2D through the bi-viscosity regularization.
//!
//! * [`constitutive`]: tensor-level Bingham and bi-viscosity laws.
//! * [`grid`]: MAC-grid fields, discrete operators and norms.
//! * [`solver`]: projection-method time stepping with implicit Picard diffusion.
//! * [`diagnostics`]: energy ledgers, weak/VI residuals, a-priori tracking.
//! * [`continuation`]: sweeps over the regularization index `m`.
//! * [`scenario`], [`config`], [`cli`]: benchmark problems, config files, CLI.

pub mod cli;
pub mod config;
pub mod constitutive;
pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
