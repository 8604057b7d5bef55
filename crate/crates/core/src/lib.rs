//! Training-data influence estimation for gradient-boosted decision trees.
//!
//! * [`gbdt`]: deterministic reference trainer and predictor.
//! * [`influence`]: leave-one-out, subsampling, leaf refitting, leaf-influence
//!   (full and single-point), BoostIn, TREX, TreeSim and baselines.
//! * [`harness`]: remove-and-retrain style protocols and diagnostics.
//! * [`data_io`]: CSV ingestion, encoding, splitting and report files.

pub mod data_io;
pub mod error;
pub mod gbdt;
pub mod harness;
pub mod influence;

pub use error::{Error, Result};
