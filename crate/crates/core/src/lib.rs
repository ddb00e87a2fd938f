//! Stochastic exponentials driven by compensated compound-Poisson martingales.
//!
//! The crate simulates the driver `M_t = Σ_{t_i ≤ t} z_i − m1·t` exactly,
//! evaluates the Doléans-Dade exponential `z` of `∫ α dM` along each path,
//! reweights paths by `z_T` to move to the tilted measure, and runs Monte
//! Carlo checks that `E z_T = 1` when `α² <= K·(1 + sup_{s≤t} M²_{s−})`.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the
//! report writers use.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benes_harness;
pub mod brownian_ref;
pub mod config;
pub mod error;
pub mod girsanov;
pub mod jump_measure;
pub mod path_sim;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod stoch_exp;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type JumpKind = jump_measure::JumpKind<f64>;
pub type JumpMeasureSpec = jump_measure::JumpMeasureSpec<f64>;
pub type Moments = jump_measure::Moments<f64>;
pub type JumpPath = path_sim::JumpPath<f64>;
pub type StoppingTime = path_sim::StoppingTime<f64>;
pub type ControlSpec = stoch_exp::ControlSpec<f64>;
pub type ExponentialTrajectory<'a> = stoch_exp::ExponentialTrajectory<'a, f64>;
pub type McEstimate = stats::McEstimate<f64>;
pub type TiltedBatch = girsanov::TiltedBatch<f64>;
pub type CompensatorReport = girsanov::CompensatorReport<f64>;
pub type BrownianPath = brownian_ref::BrownianPath<f64>;
pub type ExperimentConfig = config::ExperimentConfig<f64>;
pub type ExperimentResult = benes_harness::ExperimentResult<f64>;
pub type DiagnosticsReport = benes_harness::DiagnosticsReport<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type JumpMeasureSpec = crate::jump_measure::JumpMeasureSpec<f32>;
    pub type JumpPath = crate::path_sim::JumpPath<f32>;
    pub type ControlSpec = crate::stoch_exp::ControlSpec<f32>;
    pub type McEstimate = crate::stats::McEstimate<f32>;
    pub type BrownianPath = crate::brownian_ref::BrownianPath<f32>;
    pub type ExperimentConfig = crate::config::ExperimentConfig<f32>;
}
