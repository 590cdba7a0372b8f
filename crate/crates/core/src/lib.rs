//! Coverage-based selection of in-context demonstrations.
//!
//! [`relevance`] scores candidates one at a time, [`setcover`] scores and
//! greedily builds demonstration sets, and [`promptkit`] renders them.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod promptkit;
pub mod relevance;
pub mod setcover;
pub mod terms;

pub use error::{Error, Result};
