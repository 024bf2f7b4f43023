//! Batch log anomaly detection toolkit.
//!
//! The pipeline turns raw text logs into per-second template-count vectors,
//! scores them with a PCA subspace detector and a from-scratch autoencoder,
//! fuses both scores into a weighted ensemble timeline, and then refines the
//! timeline with a three-stage recurring-anomaly procedure that suppresses
//! pseudo positives and short transients.

pub mod autoencoder;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod pca;
pub mod recurrence;
pub mod rng;
pub mod score;
pub mod synth;

pub use error::{Error, Result};
