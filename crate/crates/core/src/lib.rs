//! Hub-aware sparse precision matrix estimation.
//!
//! The estimator splits the precision matrix as `Theta = V + V^T + Z`, with a
//! sparse `Z` and a column-sparse `V` whose nonzero columns mark hubs. Columns
//! listed in the discriminated set get their own, weaker penalties so prior
//! beliefs about hubs can be injected.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod linalg;
pub mod penalty;
pub mod selection;
pub mod workflows;

pub use error::{Error, Result};
