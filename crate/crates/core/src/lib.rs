//! Finite-sample representations of linear plants and data-driven fault detection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod linalg;
pub mod ltisim;
pub mod repr;
pub mod sigkit;
pub mod subspace;

pub use error::{Error, Result};
