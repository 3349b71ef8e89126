//! Power-law random features (PLRF) laboratory.
//!
//! One-pass SGD on the PLRF least-squares problem, the exact expected-loss
//! Volterra recursion, the deterministic-equivalent resolvent `m(z)`, the
//! closed-form component functions with their phase diagram, and the
//! IsoFLOP measurement of compute-optimal exponents.

pub mod error;
pub mod frontier;
pub mod interp;
pub mod problem;
pub mod quad;
pub mod rng;
pub mod sgd;
pub mod special;
pub mod spectrum;
pub mod sums;
pub mod theory;
pub mod volterra;

pub use error::{Error, Result};
pub use problem::{flops, make_problem, population_risk, CurvePoint, LossCurve, ProblemInstance, ProblemSpec, Source};
