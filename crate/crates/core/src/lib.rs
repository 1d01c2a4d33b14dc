//! Invertible asynchronous-leapfrog (ALF) integration for neural ODEs and
//! memory-efficient gradient estimation through it.
//!
//! An ALF step `ψ` carries an augmented state `(z, v, t)` where `v` tracks
//! `dz/dt`. Every step has an explicit inverse `ψ⁻¹`, so the backward pass can
//! rebuild the trajectory from the end state alone instead of storing it.
//!
//! ```
//! use leapgrad::{integrate, LinearScalarField, SolverConfig, StateVec, StoragePolicy};
//!
//! let field = LinearScalarField::new();
//! let z0 = StateVec::new(vec![1.0]).unwrap();
//! let cfg = SolverConfig::adaptive(1e-6, 1e-8);
//! let (rec, _) = integrate(&field, &z0, 0.0, 1.0, &[1.0], &cfg, StoragePolicy::None).unwrap();
//! assert!((rec.end_state.z[0] - 1f64.exp()).abs() < 1e-4);
//! ```
//!
//! The guide under `book/` walks through the pieces; its code blocks run as
//! doctests of this crate.

pub mod alf;
pub mod analysis;
pub mod driver;
mod error;
pub mod field;
pub mod grad;

pub use alf::{
    alf_inverse, alf_step, estimate_error, midpoint_step, AugmentedState, Damping, ErrorNorm,
    StepResult, Tolerance,
};
pub use driver::{
    integrate, integrate_on_grid, reconstruct_backward, CheckpointLog, Counters, IntegrationRecord,
    SolverConfig, StepMode, StoragePolicy,
};
pub use error::{Error, Result};
pub use field::{
    ConstantField, Dynamics, EvalCounter, ExactFlow, LinearScalarField, MlpField, MlpWeights,
    ParamVec, StateVec, VectorField, ZeroField,
};
pub use grad::{gradient, GradientReport, LossFn, Method, Problem, SquaredNorm};

/// Floats in artifacts: 17 significant digits, round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/alf.md")]
    struct Alf;
    #[doc = include_str!("../../../book/src/driver.md")]
    struct Driver;
    #[doc = include_str!("../../../book/src/gradients.md")]
    struct Gradients;
    #[doc = include_str!("../../../book/src/stability.md")]
    struct Stability;
    #[doc = include_str!("../../../book/src/studies.md")]
    struct Studies;
}
