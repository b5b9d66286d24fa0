// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod data;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod norms;
pub mod solvers;
pub mod trainer;

pub use error::{Error, Result};
