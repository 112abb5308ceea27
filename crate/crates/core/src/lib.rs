//! Bayesian Fay–Herriot small-area models that shrink both the area means
//! and the sampling variances.
//!
//! Three models are provided:
//!
//! * [`ModelKind::Stk1`]: `sigma2_i ~ IG(a_i, b_i gamma)` with flat priors on
//!   `beta`, `tau2`, `gamma`.
//! * [`ModelKind::Stk2`]: as `Stk1` with the prior scale
//!   `b_i gamma exp(w_i' eta)` depending on area covariates.
//! * [`ModelKind::Yc`]: a flat prior on each `sigma2_i`.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`.

// `!(x > 0)` deliberately rejects NaN as well as non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod linalg;
pub mod model;
pub mod posterior;
pub mod quadrature;
pub mod real;
pub mod rng;
pub mod sampler;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{
    check_conditions, check_design, BRule, ConditionReport, DesignView, ModelKind, Violation,
};
pub use posterior::{credible_interval, dic, marginal_log_likelihood, summarize, Param};
pub use real::Real;
pub use rng::{derive_seed, seeded, RandomSource};
pub use sampler::{run_chain, Blocks, ChainDiagnostics, SamplerConfig};
pub use simulation::{
    generate_replication, run_experiment, ExperimentReport, MethodRow, SimConfig, VarianceRegime,
};

pub type AreaObservation = model::AreaObservation<f64>;
pub type Dataset = model::Dataset<f64>;
pub type HyperParams = model::HyperParams<f64>;
pub type ModelSpec = model::ModelSpec<f64>;
pub type ParameterState = sampler::ParameterState<f64>;
pub type PosteriorDraws = posterior::PosteriorDraws<f64>;
pub type Summary = posterior::Summary<f64>;
pub type CredibleInterval = posterior::CredibleInterval<f64>;
pub type Phi = posterior::Phi<f64>;
pub type DicResult = posterior::DicResult<f64>;
pub type GibbsKernel<'a> = sampler::GibbsKernel<'a, f64>;

pub type Dataset32 = model::Dataset<f32>;
pub type ModelSpec32 = model::ModelSpec<f32>;
pub type PosteriorDraws32 = posterior::PosteriorDraws<f32>;
