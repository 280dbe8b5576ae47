//! Longitudinal behavioral sensing toolkit: turn multimodal event logs into
//! an individuals x variables x days tensor, fit non-negative CP
//! decompositions by multi-restart HALS, pick the rank with core
//! consistency, and test the resulting components against outcome metadata.
//!
//! The pipeline is deterministic end to end: all randomness flows from
//! explicit seeds and all outputs are plain text with stable formatting.

pub mod analysis;
pub mod cli;
pub mod decomp;
pub mod diagnostics;
pub mod error;
pub mod featurize;
pub mod io;
pub mod linalg;
pub mod report;
pub mod special;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
