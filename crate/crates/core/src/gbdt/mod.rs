//! Reference gradient-boosted decision trees.
//!
//! The trainer is deterministic and exposes everything the influence
//! estimators need: per-leaf instance sets, leaf values that already carry
//! the learning rate, and per-iteration prediction traces.

pub mod dataset;
pub mod loss;
pub mod model;
pub mod tree;

pub use dataset::{Dataset, TaskKind};
pub use loss::{Derivatives, LossFamily};
pub use model::{fingerprint, initial_estimate, train, GbdtModel, PredictionTrace, TrainConfig};
pub use tree::{build_tree, Child, Leaf, RegressionTree, SplitNode, TreeParams};
