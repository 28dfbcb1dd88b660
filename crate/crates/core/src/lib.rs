//! Degree distributions of random trees grown by generalized preferential
//! attachment.
//!
//! A new node attaches to an existing node of out-degree `k` with
//! probability proportional to `w(k)`. This crate computes the limiting
//! fraction `c_k` of nodes with at least `k` children together with the
//! Malthusian parameter `λ*` ([`theory`]), grows such trees at scale with a
//! degree-bucket sampler ([`growth`]), and checks simulations against the
//! closed forms ([`analysis`]).
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below are what the CLI and most callers use.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod growth;
pub mod histogram;
pub mod scalar;
pub mod theory;
pub mod weights;

pub use error::{Error, Result};
pub use histogram::DegreeHistogram;
pub use scalar::Scalar;

pub type WeightSpecF64 = weights::WeightSpec<f64>;
pub type WeightFormF64 = weights::WeightForm<f64>;
pub type TheorySolutionF64 = theory::TheorySolution<f64>;
pub type LaplaceEvalF64 = theory::LaplaceEval<f64>;
pub type GrowthStateF64 = growth::GrowthState<weights::WeightSpec<f64>>;
pub type ExactResultF64 = analysis::ExactResult<f64>;

pub type WeightSpecF32 = weights::WeightSpec<f32>;
pub type TheorySolutionF32 = theory::TheorySolution<f32>;
