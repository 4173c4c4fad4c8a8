//! Structural-projection Hebbian representation learning.
//!
//! Blocks are trained one at a time, without backpropagation between them,
//! to make the Gram matrix of a low-dimensional projection of their output
//! match the Gram matrix of their input. A closed-form SVD optimum for the
//! linear case serves as ground truth throughout.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod oracle;
pub mod plasticity;
pub mod sampling;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use numerics::Matrix;
