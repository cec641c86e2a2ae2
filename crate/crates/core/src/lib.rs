//! Correlated photon-pair generation in a double-Λ active-Raman-gain medium.
//!
//! The crate evaluates the closed-form frequency-domain solution of the
//! coupled probe/four-wave-mixing propagation problem and checks it against
//! independent numerical oracles: a Runge–Kutta integrator for the field
//! transfer, a truncated Fock-space evolution for photon-number amplitudes,
//! and finite differences for group velocities.

pub mod cli;
pub mod correlation;
pub mod dispersion;
pub mod efficiency;
pub mod error;
pub mod model;
pub mod propagation;
pub mod quantum_state;

pub use error::{Error, Result};
