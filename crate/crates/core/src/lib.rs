//! Trace-driven simulator for branch prediction units protected by
//! per-context secret tokens.

pub mod analysis;
pub mod attack;
pub mod bits;
pub mod error;
pub mod remap;
pub mod remap_gen;
pub mod sim;
pub mod predictors;
pub mod st;
pub mod trace;

pub use error::{Error, Result};
