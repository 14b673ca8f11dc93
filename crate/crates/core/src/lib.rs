//! Differentially private SGD toolkit.
//!
//! - [`tensor`] and [`rng`]: dense arithmetic and seeded sampling.
//! - [`model`]: layered networks with per-example reverse-mode gradients and
//!   freeze-mask training strategies.
//! - [`dpsgd`]: lot sampling, per-example clipping, Gaussian noising and the
//!   descent step, with a plain-SGD path for the non-private baseline.
//! - [`accountant`]: Rényi-DP accounting of the subsampled Gaussian mechanism
//!   and inverse calibration of the noise multiplier.
//! - [`data`]: CoNLL/CSV ingestion, synthetic skewed corpora, featurization.
//! - [`metrics`]: confusion matrices, accuracy and macro-F1.
//! - [`harness`]: config-driven runs, sweeps, privacy curves and reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common case.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod data;
pub mod dpsgd;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
