//! Probing language models on patent-medicine ingredient knowledge.
//!
//! The pipeline: load a [`corpus::Corpus`], derive a balanced
//! [`dataset::EvalDataset`], run a [`protocols::Protocol`] against a
//! [`providers::Provider`], then score the resulting [`protocols::RunLog`]
//! with [`metrics`].

pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod digest;
mod error;
pub mod metrics;
pub mod protocols;
pub mod providers;
pub mod report;
pub mod retrieval;

pub use error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
