//! Interpretation-driven subgroup discovery for tabular binary outcomes.
//!
//! The crate covers the whole analytic path without touching the file
//! system: cohort preprocessing, a second-order boosted tree learner,
//! exact path-dependent TreeSHAP, a seeded UMAP layout, HDBSCAN with
//! nearest-neighbour label propagation, subgroup enumeration/selection and
//! the statistics used to compare pooled and subgroup models.
//!
//! Everything is `no_std` + `alloc`; file formats and the command-line
//! driver live in the companion `shapgroups` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attribution;
pub mod clustering;
pub mod embedding;
mod error;
pub mod gbdt;
pub mod math;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod stats;
pub mod subgroups;
pub mod synthetic;
pub mod table;

pub use error::{Error, Result};
