//! Deterministic desk-scale simulator of federated class-incremental
//! learning with hierarchical generative prototypes.
//!
//! The protocol runs entirely in feature space: a frozen backbone is
//! abstracted into feature vectors, clients train a linear head (plus an
//! optional linear adapter) on non-IID shards, and the server aggregates
//! parameters, fits a two-level Gaussian mixture over per-client class
//! prototypes, and rebalances the classifier on features sampled from it.
//!
//! Modules follow the pipeline: [`numerics`] (dense math, RNG streams,
//! optimizers), [`datasets`] (generation, partitioning, scheduling, file
//! I/O), [`client`] (local training, prototypes), [`server`] (aggregation,
//! mixture, rebalancing), [`metrics`] (diagnostics), and [`harness`]
//! (orchestration, studies, reports).

pub mod client;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod server;

pub use error::{Error, Result};
