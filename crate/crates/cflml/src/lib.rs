//! Closed-form local metric learning for k-nearest-neighbor
//! classification.
//!
//! A model is a small group of linear metrics grown by local search: each
//! step solves one generalized eigenproblem built from filter-weighted
//! neighborhood scatter matrices of the currently ambiguous instances,
//! and the candidate metric is kept only when it lowers the group's
//! validation error. Queries pick the metric whose neighborhood they fit
//! best and are labeled by majority vote under it.
//!
//! The crate ships:
//! - dataset loading, standardization, and seeded stratified splits
//!   ([`dataset`]);
//! - the symmetric-definite generalized eigensolver ([`linalg`]);
//! - linear metrics and neighborhood statistics ([`metric`],
//!   [`neighborhood`]);
//! - offspring assembly and the search loop ([`offspring`], [`group`]);
//! - multi-metric kNN classification and persistence ([`classify`],
//!   [`model`]);
//! - reference transforms and a benchmark harness ([`baselines`],
//!   [`cli`]).

pub mod baselines;
pub mod classify;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod group;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod neighborhood;
pub mod offspring;

pub use error::{Error, Result};
