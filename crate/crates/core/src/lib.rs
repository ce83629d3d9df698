//! Split-step Fourier simulation of the trapped nonlinear Schrödinger
//! equation with nonlinear damping,
//!
//! ```text
//! i∂_t u + ½Δu = V u + λ|u|²u − iσ|u|^{p−1}u,    V(x) = ½ Σ ω_j² x_j²,
//! ```
//!
//! together with the energy functionals, balance-law residuals and reference
//! solvers used to check it.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod model;
pub mod oracle;
pub mod propagator;
pub mod scenario;

pub use diagnostics::{DiagnosticsRecord, Evaluator, Observation};
pub use error::{Error, Result};
pub use field::WaveFunction;
pub use grid::Grid;
pub use model::ModelParams;
pub use propagator::{evolve, Scheme, Status, StepperConfig, Trajectory};
