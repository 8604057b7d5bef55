//! Experiment configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::datasets::DatasetSource;
use crate::data_io::SplitSpec;
use crate::error::{invalid, Result};
use crate::gbdt::TrainConfig;
use crate::influence::{EstimatorKind, EstimatorOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SingleRemoval,
    TargetedEdit,
    MultiRemoval,
    AddNoise,
    FixMislabeled,
    SequentialRemoval,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::SingleRemoval,
        Protocol::TargetedEdit,
        Protocol::MultiRemoval,
        Protocol::AddNoise,
        Protocol::FixMislabeled,
        Protocol::SequentialRemoval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::SingleRemoval => "single_removal",
            Protocol::TargetedEdit => "targeted_edit",
            Protocol::MultiRemoval => "multi_removal",
            Protocol::AddNoise => "add_noise",
            Protocol::FixMislabeled => "fix_mislabeled",
            Protocol::SequentialRemoval => "sequential_removal",
        }
    }

    pub fn default_checkpoints(self) -> Vec<f64> {
        match self {
            Protocol::SingleRemoval | Protocol::TargetedEdit => vec![0.001, 0.005, 0.01, 0.015, 0.02],
            Protocol::MultiRemoval | Protocol::AddNoise => (1..=10).map(|i| i as f64 * 0.05).collect(),
            Protocol::FixMislabeled => (1..=6).map(|i| i as f64 * 0.05).collect(),
            Protocol::SequentialRemoval => vec![0.02],
        }
    }

    /// Metric the ranking table is built from; larger is better.
    pub fn primary_metric(self) -> &'static str {
        match self {
            Protocol::FixMislabeled => "detected",
            _ => "delta_loss",
        }
    }

    /// Metric compared against Random for relative magnitude: absolute
    /// loss after perturbation, or detections for the fix protocol.
    pub fn magnitude_metric(self) -> &'static str {
        match self {
            Protocol::FixMislabeled => "detected",
            _ => "loss",
        }
    }

    pub fn is_single_target(self) -> bool {
        matches!(self, Protocol::SingleRemoval | Protocol::TargetedEdit | Protocol::SequentialRemoval)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            invalid(format!("unknown protocol `{s}`; valid protocols: {}", names.join(", ")))
        })
    }
}

/// How training instances are ordered: an estimator, or BoostIn
/// self-influence (largest first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Estimator(EstimatorKind),
    BoostInSelf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Estimator(e) => e.name(),
            Method::BoostInSelf => "boostin_self",
        }
    }

    pub fn estimator(self) -> EstimatorKind {
        match self {
            Method::Estimator(e) => e,
            Method::BoostInSelf => EstimatorKind::BoostIn,
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, Method::Estimator(EstimatorKind::Random | EstimatorKind::RandomSl))
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "boostin_self" {
            return Ok(Method::BoostInSelf);
        }
        s.parse::<EstimatorKind>()
            .map(Method::Estimator)
            .map_err(|_| invalid(format!("unknown estimator `{s}`; valid estimators: {}, boostin_self", EstimatorKind::valid_names())))
    }
}

impl TryFrom<String> for Method {
    type Error = crate::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConfig {
    pub name: String,
    #[serde(default)]
    pub config: TrainConfig,
}

/// Trainer variants averaged over in place of external tree libraries:
/// leaf-wise and depth-wise growth, each at a small and a larger size.
pub fn tree_type_variants() -> Vec<NamedConfig> {
    let base = TrainConfig::default();
    vec![
        NamedConfig {
            name: "leafwise_small".into(),
            config: TrainConfig {
                n_trees: 50,
                max_leaves: Some(15),
                max_depth: None,
                ..base.clone()
            },
        },
        NamedConfig {
            name: "leafwise_large".into(),
            config: TrainConfig {
                n_trees: 100,
                max_leaves: Some(31),
                max_depth: None,
                ..base.clone()
            },
        },
        NamedConfig {
            name: "depthwise_small".into(),
            config: TrainConfig {
                n_trees: 50,
                max_leaves: None,
                max_depth: Some(3),
                ..base.clone()
            },
        },
        NamedConfig {
            name: "depthwise_large".into(),
            config: TrainConfig {
                n_trees: 100,
                max_leaves: None,
                max_depth: Some(5),
                ..base
            },
        },
    ]
}

fn default_estimators() -> Vec<Method> {
    vec![Method::Estimator(EstimatorKind::BoostIn), Method::Estimator(EstimatorKind::Random)]
}

fn default_model_configs() -> Vec<NamedConfig> {
    vec![NamedConfig {
        name: "default".into(),
        config: TrainConfig::default(),
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Method>,
    /// Fractions of the training set; protocol defaults when absent.
    #[serde(default)]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(default = "default_targets")]
    pub n_targets: usize,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    /// Floor on the number of validation targets.
    #[serde(default = "default_min_validation")]
    pub min_validation: usize,
    /// Fraction of training labels corrupted before fixing.
    #[serde(default = "default_noise")]
    pub noise_fraction: f64,
    #[serde(default)]
    pub reestimate: bool,
    #[serde(default)]
    pub rng_seed: u64,
    /// Repetitions with seeds `rng_seed, rng_seed + 1, ...`.
    #[serde(default = "one")]
    pub n_seeds: u64,
    pub datasets: Vec<DatasetSource>,
    #[serde(default = "default_model_configs")]
    pub model_configs: Vec<NamedConfig>,
    /// Train/test split; its seed is replaced by each run's seed.
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub estimator_options: EstimatorOptions,
    /// Refuse to start when the projected retrain count is larger.
    #[serde(default = "default_max_retrains")]
    pub max_retrains: u64,
    #[serde(default = "default_cache_bytes")]
    pub cache_bytes: usize,
}

fn default_targets() -> usize {
    100
}
fn default_validation() -> f64 {
    0.1
}
fn default_min_validation() -> usize {
    10
}
fn default_noise() -> f64 {
    0.4
}
fn one() -> u64 {
    1
}
fn default_max_retrains() -> u64 {
    1_000_000
}
fn default_cache_bytes() -> usize {
    512 << 20
}

impl ExperimentSpec {
    pub fn new(protocol: Protocol, datasets: Vec<DatasetSource>) -> Self {
        Self {
            protocol,
            estimators: default_estimators(),
            checkpoints: None,
            n_targets: default_targets(),
            validation_fraction: default_validation(),
            min_validation: default_min_validation(),
            noise_fraction: default_noise(),
            reestimate: false,
            rng_seed: 0,
            n_seeds: 1,
            datasets,
            model_configs: default_model_configs(),
            split: SplitSpec::default(),
            estimator_options: EstimatorOptions::default(),
            max_retrains: default_max_retrains(),
            cache_bytes: default_cache_bytes(),
        }
    }

    pub fn checkpoint_fractions(&self) -> Vec<f64> {
        self.checkpoints.clone().unwrap_or_else(|| self.protocol.default_checkpoints())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let cps = self.checkpoint_fractions();
        if cps.is_empty() || cps.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) || cps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("checkpoints must be strictly increasing fractions in (0, 1]"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("at least one estimator is required"));
        }
        for (i, m) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(m) {
                return Err(invalid(format!("estimator `{m}` listed twice")));
            }
            if *m == Method::BoostInSelf && self.protocol != Protocol::FixMislabeled {
                return Err(invalid("boostin_self is only an ordering for fix_mislabeled"));
            }
            if self.protocol == Protocol::TargetedEdit && !m.is_random() && !m.estimator().supports_edits() {
                return Err(crate::Error::UnsupportedEstimator(m.name().into()));
            }
        }
        if self.datasets.is_empty() || self.model_configs.is_empty() {
            return Err(invalid("need at least one dataset and one model config"));
        }
        for c in &self.model_configs {
            c.config.validate()?;
        }
        if self.n_targets == 0 || self.n_seeds == 0 {
            return Err(invalid("n_targets and n_seeds must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(invalid("validation_fraction must lie in (0, 1)"));
        }
        if !(self.noise_fraction > 0.0 && self.noise_fraction < 1.0) {
            return Err(invalid("noise_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Instances affected at a checkpoint: `ceil(fraction * n)` clamped to
/// `[1, n - 1]`.
pub fn checkpoint_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Instances inspected at a fix checkpoint: `ceil(fraction * n)` clamped to
/// `[1, n]`.
pub fn inspection_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_spec_with_defaults() {
        let spec = ExperimentSpec::from_json(r#"{"protocol": "multi_removal", "datasets": [{"bundled": "iris"}]}"#).unwrap();
        let grid = spec.checkpoint_fractions();
        assert_eq!(grid.len(), 10);
        assert!((grid[9] - 0.5).abs() < 1e-12);
        let names: Vec<String> = spec.estimators.iter().map(|m| m.to_string()).collect();
        assert_eq!(names, vec!["boostin", "random"]);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            r#"{"protocol": "nope", "datasets": [{"bundled": "iris"}]}"#,
            r#"{"protocol": "multi_removal", "datasets": [{"bundled": "iris"}], "checkpoints": [0.2, 0.1]}"#,
            r#"{"protocol": "targeted_edit", "datasets": [{"bundled": "iris"}], "estimators": ["subsample"]}"#,
            r#"{"protocol": "multi_removal", "datasets": [{"bundled": "iris"}], "estimators": ["boostin_self"]}"#,
            r#"{"protocol": "multi_removal", "datasets": [{"bundled": "iris"}], "bogus": 1}"#,
        ];
        for text in bad {
            assert!(ExperimentSpec::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn checkpoint_counts() {
        assert_eq!(checkpoint_count(0.001, 800), 1);
        assert_eq!(checkpoint_count(0.02, 800), 16);
        assert_eq!(checkpoint_count(0.05, 100), 5);
        assert_eq!(checkpoint_count(1.0, 10), 9);
        assert_eq!(inspection_count(1.0, 10), 10);
        assert_eq!(inspection_count(0.3, 800), 240);
    }
}
