//! Finite-time robust feedback synthesis for multi-input chain-of-integrator
//! systems via the controllability function.
//!
//! Given a canonical system `ẋ = (A0 + K + R(t,x)) x + B0 u` with unknown but
//! bounded `R`, the crate builds the controllability function `Θ(x)` and the
//! bounded feedback `u(x)`, computes the admissible perturbation margin `Δ`,
//! simulates the closed loop and certifies the resulting guarantees.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod pendulum;
pub mod rational;
pub mod robustness;
mod serde_util;
pub mod simulator;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
pub use model::{BlockStructure, CanonicalSystem, MaskKind, PerturbationMask, PerturbationSpec};
pub use robustness::{BoundMode, RobustnessBound};
pub use synthesis::{Gramians, SynthesisArtifacts};
