//! Omission detection and weighting for clinical dialogue summaries.
//!
//! A dialogue is truncated to its subjective portion, summarized, and broken
//! into atomic facts. Each fact the summary leaves out is weighted by its
//! diagnostic importance and by how uniquely it supports or refutes a
//! diagnosis in the differential; the weights add up to a per-summary score.

pub mod baselines;
pub mod config;
pub mod datamodel;
pub mod dataset;
mod error;
pub mod gateway;
pub mod pipeline;
pub mod scoring;

pub use error::{Error, Result};
