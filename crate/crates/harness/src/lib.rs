//! Experiment runner around the `iclcover` selection library: config loading,
//! batch selection, prompt rendering, completion calls, scoring and reports.

pub mod client;
pub mod config;
pub mod coverage;
pub mod error;
pub mod eval;
pub mod io;
pub mod random;
pub mod report;
pub mod run;
pub mod synth;

pub use error::{HarnessError, Result};
