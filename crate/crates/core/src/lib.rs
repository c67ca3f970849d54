//! Stochastic approximation proximal method of multipliers for convex
//! programs with expectation constraints
//!
//! ```text
//! min  f(x) = E[F(x, ξ)]   s.t.  g_i(x) = E[G_i(x, ξ)] <= 0,  x ∈ X₀
//! ```
//!
//! Each iteration draws one sample ξ_t, approximately minimizes the sampled
//! augmented Lagrangian plus a proximal term over X₀, then takes a projected
//! multiplier step. The crate also carries closed-form calculators for the
//! expected and high-probability regret bounds of the method, synthetic
//! instances with known optima, a projected-SA baseline, and a harness that
//! measures regret over many seeded runs.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod baseline;
pub mod bounds;
pub mod error;
pub mod harness;
pub mod instances;
pub mod problem;
mod vecops;

pub use algorithm::{
    aug_lagrangian, aug_lagrangian_subgrad, run_pmmsopt, solve_subproblem, step_bound, update_multiplier, AlgoConfig,
    IterateState, ParamRule, RunTrace, StepRecord,
};

pub use baseline::{run_projected_sa, BaselineConfig, StepRule};
pub use bounds::{kappa_constants, BoundConstants, DriftParams};
pub use error::{Error, Result};
pub use instances::{make_affine_qp, make_scalar_toy, Instance, InstanceDescriptor, InstanceSpec};
pub use problem::{
    project_ball, project_box, project_nonneg, ConstantsBundle, Domain, Sample, SampleStream, StochasticProgram,
};
