//! Viscosity-method toolkit for free boundary minimal surfaces.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ambient;
pub mod cli;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod flow;
pub mod mesh;
pub mod par;
pub mod real;

pub use error::{Error, Result};
