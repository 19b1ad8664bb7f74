//! Copy detection pattern (CDP) authentication toolkit.
//!
//! Synthesises templates, simulates printing/acquisition and copy attacks,
//! and evaluates authentication with spatial metrics, one-class SVMs,
//! supervised classifiers and a template-estimating autoencoder.

pub mod channel;
pub mod cli;
pub mod decision;
pub mod deepfeat;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod ocsvm;
pub mod oracles;
pub mod seed;
pub mod supervised;
pub mod template;

pub use error::{Error, Result};
