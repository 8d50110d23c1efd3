//! Volterra reservoir kernel for sequential data.
//!
//! The Volterra reservoir kernel is a sequential kernel with the echo state
//! property: the kernel value of two semi-infinite input sequences satisfies a
//! contractive scalar recursion, so it can be evaluated exactly on finite,
//! zero-left-padded samples without ever materializing the underlying
//! infinite-dimensional feature map. This crate provides
//!
//! - finite-sample sequence types with the zero-padding convention
//!   ([`sequence`]),
//! - the kernel recursion, a truncated-sum oracle with guaranteed error
//!   control, and streaming / pairwise Gram matrix construction with a
//!   rectangular forecasting extension ([`kernel`]),
//! - static RBF and polynomial comparison kernels on flattened windows
//!   ([`baseline`]),
//! - closed-form kernel ridge regression and forecast evaluation metrics
//!   ([`regression`]),
//! - an end-to-end experiment pipeline (CSV ingestion, normalization,
//!   rolling windows, grid search, forecasting, report emission) behind the
//!   `volterra` command-line tool ([`pipeline`]).

pub mod baseline;
pub mod error;
pub mod kernel;
pub mod pipeline;
pub mod regression;
pub mod sequence;

pub use error::{Error, Result};
