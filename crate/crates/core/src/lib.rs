//! Variational angle-of-arrival and channel estimation for uniform linear
//! arrays, with tools for inspecting the loss landscape and classical
//! baselines to compare against.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod landscape;
pub mod linalg;
pub mod loss;
pub mod par;
pub mod preprocess;
pub mod serial;
pub mod signal;

pub use error::{Error, Result};
