//! Benchmarking observational effect estimators against reference sets
//! derived from active-comparator trials.
//!
//! The pipeline has four stages. [`refset`] turns a trial dump into labelled
//! drug/drug/outcome relationships using the exact tests in [`exact`].
//! [`cohort`] builds new-user cohorts from patient event streams.
//! [`estimators`] runs the effect estimators on each cohort, and [`eval`]
//! scores them. [`synth`] generates claims, trials and ground truth for
//! testing. [`cli`] wires it all into the `refbench` binary.

// NaN-rejecting range checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod estimators;
pub mod exact;
pub mod ingest;
pub mod io;
pub mod refset;
pub mod synth;

pub use error::{Error, Result};
