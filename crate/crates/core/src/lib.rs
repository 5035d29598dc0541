//! Lossless compression of link-level network traffic measurements.
//!
//! Traffic volumes measured on every directed link of a topology form a
//! `T × L` integer matrix. Each link's series is entropy coded with a
//! finite-precision range coder whose probabilities come from a pluggable
//! predictor: a uniform model, static or sliding-window histograms, a
//! per-link recurrent network, or a spatio-temporal graph network that
//! conditions every value on the past window and on the links already coded
//! in the current bin.
//!
//! The crate also ships a synthetic generator for correlated traffic on a
//! routed topology and a benchmark harness comparing all methods against a
//! DEFLATE baseline.

pub mod bench;
pub mod coder;
pub mod datagen;
mod error;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod neural;
pub mod pipeline;
pub mod traffic;

pub use error::{Error, Result};
pub use graph::LinkGraph;
pub use traffic::{Mask, Topology, TrafficDataset, TrafficWindow};
