//! Substructure damage detection from a reduced sensor set.
//!
//! The workflow: simulate (or measure) a healthy lattice, fit a VARX model of
//! the substructure with its boundary DOFs as exogenous inputs, rank channel
//! groups by pairwise conditional Granger causality to choose which sensors
//! can be dropped, then evaluate new records with the dropped channels
//! replaced by recursive model estimates and score them with a mean absolute
//! deviation damage indicator.

pub mod config;
pub mod detect;
pub mod error;
pub mod granger;
pub mod lattice;
pub mod order;
pub mod pipeline;
pub mod signal;
pub mod varx;

pub use error::{Error, ErrorKind, Result};
