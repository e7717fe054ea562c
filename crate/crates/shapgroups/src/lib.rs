//! File formats, run artifacts and the command-line driver around
//! `shapgroups-core`.
//!
//! A run reads a CSV cohort (or generates a synthetic one), executes the
//! pipeline and persists every stage under an output directory together
//! with `report.json` and a SHA-256 manifest. [`verify::verify`] recomputes
//! the reported numbers from the persisted per-row files.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod io;
pub mod plots;
pub mod score;
pub mod synth;
pub mod verify;

pub use artifacts::{directory_digest, execute, RunOutcome, RunReport};
pub use config::{InputSource, RunConfig};
pub use error::{Error, Result};
pub use shapgroups_core as core;
