//! Differentiable temporal attention filter banks for classifying
//! variable-length feature sequences.
//!
//! A temporal attention filter is a bank of `N` Gaussian taps placed over a
//! `T×D` sequence in coordinates relative to its length, parametrized by a
//! center, a tap stride, and a variance — and differentiable in all three, so
//! filter placement trains jointly with the classifier. On top of that this
//! crate provides:
//!
//! - [`filterbank`]: filter parametrization, materialization, the attention
//!   read, and its analytic backward pass;
//! - [`pooling`]: max/sum/mean pooling and fixed temporal-pyramid banks as
//!   non-learned baselines;
//! - [`model`]: the static-filter and LSTM-adaptive classifiers over a shared
//!   MLP head, plus the text checkpoint format;
//! - [`train`]: cross-entropy, SGD with momentum, frame-skip augmentation,
//!   multiclass and one-vs-all training loops, and a finite-difference
//!   gradient checker;
//! - [`data`]: the `TAF1` feature-file format, dataset manifests, and a
//!   synthetic planted-motif benchmark generator.
//!
//! The numeric core is generic over the scalar type via [`Real`] (`f32` or
//! `f64`); concrete aliases for both live at the crate root. Feature files
//! store `f32` on disk and are promoted to `f64` in memory for training and
//! gradient checking.

pub mod data;
pub mod error;
pub mod filterbank;
pub mod model;
pub mod pooling;
pub mod train;

mod matrix;
mod scalar;

pub use error::{Result, TafError};
pub use matrix::Matrix;
pub use scalar::Real;

/// The seeded generator used everywhere randomness is needed; a fixed seed
/// pins every draw regardless of platform.
pub type Prng = rand_chacha::ChaCha8Rng;

pub type FilterParams32 = filterbank::FilterParams<f32>;
pub type FilterParams64 = filterbank::FilterParams<f64>;
pub type FilterBank32 = filterbank::FilterBank<f32>;
pub type FilterBank64 = filterbank::FilterBank<f64>;
pub type FeatureSequence32 = filterbank::FeatureSequence<f32>;
pub type FeatureSequence64 = filterbank::FeatureSequence<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
