//! Detection of malicious Android applications from their boot-time
//! system-call sequences.
//!
//! The pipeline: strace logs are parsed and preprocessed into compact
//! symbol sequences ([`trace`]), a suspect sequence is scored against
//! bagged subsets of known-legitimate reference sequences by global
//! alignment ([`align`], [`ensemble`]), and the paired score vectors are
//! fed to a Wilcoxon signed-rank test that yields the final verdict
//! ([`decision`]). [`synth`] generates reproducible synthetic corpora and
//! [`eval`] drives cross-validation and sensitivity sweeps over them.

pub mod align;
pub mod config;
pub mod decision;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod synth;
pub mod trace;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
