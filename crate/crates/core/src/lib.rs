//! Generate-and-edit harness for code generation models.
//!
//! A generator samples programs, the sandbox runs them on the example test,
//! the result becomes a supplementary comment, and an editor rewrites each
//! program given the description, the program and the comment. Hidden tests
//! then score both populations.

pub mod comment;
pub mod dataset;
pub mod editor;
mod error;
pub mod generator;
pub mod jsonl;
pub mod metrics;
pub mod pipeline;
pub mod sandbox;
pub mod store;

pub use error::{Error, Result};
