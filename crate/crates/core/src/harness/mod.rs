//! Evaluation protocols and diagnostics.
//!
//! Every protocol runs per (dataset, model config, seed): split the data,
//! train the base model, fit each estimator once, then retrain on perturbed
//! training sets through a shared model cache.  Results come back as
//! [`MetricCurve`]s with a [`RankingTable`] over them.

pub mod analysis;
pub mod datasets;
pub mod protocols;
pub mod report;
pub mod spec;
pub mod stats;
pub mod synth;

pub use analysis::{
    affinity_counts, affinity_delta, affinity_histogram, correlation_matrix, rank_aggregate, runtime_bench, AffinityReport,
    BenchEntry, BenchReport, CorrelationReport, TimingSummary,
};
pub use datasets::{bundled, DatasetSource};
pub use protocols::{
    add_noise_experiment, choose_y_star, fix_mislabeled_experiment, multi_removal_experiment, run_experiment,
    sequential_removal_experiment, single_removal_experiment, targeted_edit_experiment, ProtocolOutput, RunContext,
};
pub use report::{AuditRecord, ExperimentReport, MetricCurve, RankingEntry, RankingTable, RunSummary, Trajectory};
pub use spec::{tree_type_variants, ExperimentSpec, Method, NamedConfig, Protocol};
pub use stats::PredictiveMetric;
pub use synth::{Generator, SynthSpec};
