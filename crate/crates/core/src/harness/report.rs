//! Experiment results.

use serde::{Deserialize, Serialize};

use super::spec::{ExperimentSpec, Protocol};
use crate::gbdt::TaskKind;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub tool_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads: rayon::current_num_threads(),
        }
    }
}

/// One metric per checkpoint for one estimator on one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub dataset: String,
    pub model_config: String,
    pub estimator: String,
    pub seed: u64,
    pub metric: String,
    /// Starts with the untouched baseline at 0.
    pub checkpoints: Vec<f64>,
    /// Training instances affected at each checkpoint.
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

/// Per-target trajectory from the sequential protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dataset: String,
    pub model_config: String,
    pub estimator: String,
    pub seed: u64,
    pub target_id: usize,
    pub removed: Vec<usize>,
    /// Target loss after each step, the base model first.
    pub loss: Vec<f64>,
    pub delta_loss: Vec<f64>,
}

/// Something skipped during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub dataset: String,
    pub model_config: String,
    pub seed: u64,
    pub estimator: Option<String>,
    pub target_id: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub model_config: String,
    pub seed: u64,
    pub task: TaskKind,
    pub n_train: usize,
    pub n_test: usize,
    pub predictive_metric: String,
    pub n_targets: usize,
    /// Labels corrupted before the fix protocol.
    pub corrupted: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub estimator: String,
    /// `None` when the estimator appears in no complete context.
    pub mean_rank: Option<f64>,
    /// Half-width of the 95% interval over datasets.
    pub rank_ci95: Option<f64>,
    /// Geometric mean over datasets of the estimator's mean magnitude
    /// metric divided by Random's; `None` when undefined everywhere.
    pub relative_magnitude: Option<f64>,
    /// Datasets where the ratio was undefined and left out.
    pub magnitude_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankContext {
    pub dataset: String,
    pub model_config: String,
    pub checkpoint: f64,
    /// Rank of each entry of `RankingTable::entries`, 1 is best.
    pub ranks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub metric: String,
    pub magnitude_metric: String,
    pub entries: Vec<RankingEntry>,
    pub contexts: Vec<RankContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub environment: Environment,
    pub protocol: Protocol,
    pub spec: ExperimentSpec,
    pub runs: Vec<RunSummary>,
    pub curves: Vec<MetricCurve>,
    #[serde(default)]
    pub trajectories: Vec<Trajectory>,
    pub ranking: Option<RankingTable>,
    #[serde(default)]
    pub audit: Vec<AuditRecord>,
}

impl ExperimentReport {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            environment: Environment::current(),
            protocol: spec.protocol,
            spec: spec.clone(),
            runs: Vec::new(),
            curves: Vec::new(),
            trajectories: Vec::new(),
            ranking: None,
            audit: Vec::new(),
        }
    }

    /// Curves matching every given filter.
    pub fn curves_for<'a>(&'a self, estimator: &'a str, metric: &'a str) -> impl Iterator<Item = &'a MetricCurve> + 'a {
        self.curves
            .iter()
            .filter(move |c| c.estimator == estimator && c.metric == metric)
    }

    /// Mean over all matching curves at each checkpoint.
    pub fn mean_curve(&self, estimator: &str, metric: &str) -> Option<Vec<f64>> {
        let curves: Vec<&MetricCurve> = self.curves_for(estimator, metric).collect();
        let first = curves.first()?;
        let mut sum = vec![0.0; first.values.len()];
        for c in &curves {
            if c.values.len() != sum.len() {
                return None;
            }
            for (s, v) in sum.iter_mut().zip(&c.values) {
                *s += v;
            }
        }
        Some(sum.into_iter().map(|s| s / curves.len() as f64).collect())
    }
}
