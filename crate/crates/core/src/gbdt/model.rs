use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{Dataset, TaskKind};
use super::loss::{Derivatives, LossFamily};
use super::tree::{RegressionTree, TreeBuilder, TreeParams};
use crate::error::{invalid, Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    /// Best-first growth stops at this many leaves.
    pub max_leaves: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
    pub eta: f64,
    pub lambda: f64,
    /// Splits must improve the Newton objective by more than this.
    pub min_gain: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_leaves: Some(15),
            max_depth: None,
            min_leaf_size: 5,
            eta: 0.1,
            lambda: 1.0,
            min_gain: 1e-12,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(invalid("n_trees must be >= 1"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.min_leaf_size == 0 {
            return Err(invalid("min_leaf_size must be >= 1"));
        }
        if self.max_leaves == Some(0) {
            return Err(invalid("max_leaves must be >= 1"));
        }
        Ok(())
    }

    pub(crate) fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_leaves: self.max_leaves,
            max_depth: self.max_depth,
            min_leaf_size: self.min_leaf_size,
            eta: self.eta,
            lambda: self.lambda,
            min_gain: self.min_gain,
        }
    }
}

/// A trained additive tree ensemble.
///
/// `trees[t][c]` is the tree added at iteration `t + 1` for output `c`; its
/// leaf values already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub config: TrainConfig,
    pub loss: LossFamily,
    pub n_features: usize,
    pub bias: Vec<f64>,
    pub eta: f64,
    pub lambda: f64,
    pub trees: Vec<Vec<RegressionTree>>,
    pub n_train: usize,
    pub train_fingerprint: String,
}

/// Margins after every iteration and the leaf reached in every tree.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    /// `margins[t]` is `f_t(x)`; `margins[0]` is the bias.
    pub margins: Vec<Vec<f64>>,
    /// `leaves[t][c]` is the leaf of `trees[t][c]`.
    pub leaves: Vec<Vec<usize>>,
}

impl PredictionTrace {
    pub fn final_margin(&self) -> &[f64] {
        self.margins.last().expect("trace always holds the bias")
    }
}

/// Starting margin: target mean, log-odds, or per-class log prior.
pub fn initial_estimate(dataset: &Dataset, loss: LossFamily) -> Result<Vec<f64>> {
    check_loss(dataset, loss)?;
    let n = dataset.n_rows() as f64;
    Ok(match loss {
        LossFamily::SquaredError => vec![dataset.mean_target()],
        LossFamily::Logistic => {
            let p = clamp_prior(dataset.mean_target());
            vec![(p / (1.0 - p)).ln()]
        }
        LossFamily::Softmax => {
            let mut counts = vec![0usize; dataset.n_classes()];
            for &y in dataset.targets() {
                counts[y as usize] += 1;
            }
            counts.iter().map(|&c| clamp_prior(c as f64 / n).ln()).collect()
        }
    })
}

fn clamp_prior(p: f64) -> f64 {
    const EPS: f64 = 1e-6;
    if !(EPS..=1.0 - EPS).contains(&p) {
        log::warn!("class prior {p} clamped to [{EPS}, {}]", 1.0 - EPS);
    }
    p.clamp(EPS, 1.0 - EPS)
}

fn check_loss(dataset: &Dataset, loss: LossFamily) -> Result<()> {
    if loss.task() != dataset.task() {
        return Err(invalid(format!(
            "loss {loss:?} is not legal for a {:?} dataset",
            dataset.task()
        )));
    }
    Ok(())
}

/// Hash identifying the exact training inputs.
pub fn fingerprint(dataset: &Dataset, config: &TrainConfig, loss: LossFamily) -> String {
    let mut hasher = Sha256::new();
    dataset.hash_into(&mut hasher);
    hasher.update(serde_json::to_vec(config).expect("config serialises"));
    hasher.update(format!("{loss:?}").as_bytes());
    hex::encode(hasher.finalize())
}

/// Deterministic gradient boosting with Newton leaf values.
pub fn train(dataset: &Dataset, config: &TrainConfig, loss: LossFamily) -> Result<GbdtModel> {
    config.validate()?;
    check_loss(dataset, loss)?;
    let n = dataset.n_rows();
    let k = dataset.n_outputs();
    let bias = initial_estimate(dataset, loss)?;
    let params = config.tree_params();
    let builder = TreeBuilder::new(dataset);

    // margins[i * k + c]
    let mut margins: Vec<f64> = (0..n).flat_map(|_| bias.iter().copied()).collect();
    let mut grads = vec![vec![0.0; n]; k];
    let mut hess = vec![vec![0.0; n]; k];
    let mut scratch = vec![Derivatives::default(); k];
    let mut trees = Vec::with_capacity(config.n_trees);

    for _ in 0..config.n_trees {
        for i in 0..n {
            loss.derivatives_into(dataset.target(i), &margins[i * k..(i + 1) * k], &mut scratch);
            for c in 0..k {
                grads[c][i] = scratch[c].g;
                hess[c][i] = scratch[c].h;
            }
        }
        let mut round = Vec::with_capacity(k);
        for c in 0..k {
            round.push(builder.build(&grads[c], &hess[c], &params)?);
        }
        for (c, tree) in round.iter().enumerate() {
            for leaf in &tree.leaves {
                for &i in &leaf.instance_ids {
                    margins[i * k + c] += leaf.value;
                }
            }
        }
        trees.push(round);
    }

    Ok(GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        loss,
        n_features: dataset.n_features(),
        bias,
        eta: config.eta,
        lambda: config.lambda,
        trees,
        n_train: n,
        train_fingerprint: fingerprint(dataset, config, loss),
    })
}

impl GbdtModel {
    pub fn n_iterations(&self) -> usize {
        self.trees.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn task(&self) -> TaskKind {
        self.loss.task()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(invalid(format!(
                "instance has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Raw margins `f(x)`.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.predict_raw_unchecked(x))
    }

    pub(crate) fn predict_raw_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for round in &self.trees {
            for (c, tree) in round.iter().enumerate() {
                out[c] += tree.predict(x);
            }
        }
        out
    }

    /// Identity, sigmoid or softmax of the raw margins.
    pub fn activate(&self, raw: &[f64]) -> Vec<f64> {
        self.loss.activate(raw)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.activate(&self.predict_raw(x)?))
    }

    /// Hard label for classification, the regression value otherwise.
    pub fn predict_label(&self, x: &[f64]) -> Result<f64> {
        let raw = self.predict_raw(x)?;
        Ok(label_from_raw(self.loss, &raw))
    }

    pub fn trace(&self, x: &[f64]) -> Result<PredictionTrace> {
        self.check_dim(x)?;
        Ok(self.trace_unchecked(x))
    }

    pub(crate) fn trace_unchecked(&self, x: &[f64]) -> PredictionTrace {
        let mut margins = Vec::with_capacity(self.trees.len() + 1);
        let mut leaves = Vec::with_capacity(self.trees.len());
        let mut current = self.bias.clone();
        margins.push(current.clone());
        for round in &self.trees {
            let mut ids = Vec::with_capacity(round.len());
            for (c, tree) in round.iter().enumerate() {
                let l = tree.leaf_index(x);
                current[c] += tree.leaves[l].value;
                ids.push(l);
            }
            margins.push(current.clone());
            leaves.push(ids);
        }
        PredictionTrace { margins, leaves }
    }

    /// Loss of the model on `(x, y)`.
    pub fn loss_at(&self, x: &[f64], y: f64) -> Result<f64> {
        let raw = self.predict_raw(x)?;
        self.loss.value(y, &raw)
    }

    pub fn has_instance_sets(&self) -> bool {
        self.trees.iter().flatten().all(|t| t.has_instance_sets())
    }

    /// Copy without per-leaf instance sets; only prediction is possible.
    pub fn compact(&self) -> GbdtModel {
        let mut out = self.clone();
        for tree in out.trees.iter_mut().flatten() {
            tree.strip_instance_sets();
        }
        out
    }

    pub fn approx_bytes(&self) -> usize {
        std::mem::size_of::<Self>() + self.trees.iter().flatten().map(|t| t.approx_bytes()).sum::<usize>()
    }

    /// Errors unless this model was trained on exactly `dataset`.
    pub fn check_trained_on(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n_rows() != self.n_train || fingerprint(dataset, &self.config, self.loss) != self.train_fingerprint {
            return Err(Error::Precondition(
                "dataset does not match the data this model was trained on".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbdtModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(invalid(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        if model.trees.is_empty() || model.trees.iter().any(|r| r.len() != model.bias.len()) {
            return Err(invalid("model trees must be non-empty and rectangular"));
        }
        Ok(model)
    }
}

pub(crate) fn label_from_raw(loss: LossFamily, raw: &[f64]) -> f64 {
    match loss {
        LossFamily::SquaredError => raw[0],
        LossFamily::Logistic => {
            if raw[0] >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        LossFamily::Softmax => argmax(raw) as f64,
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump_config() -> TrainConfig {
        TrainConfig {
            n_trees: 1,
            max_leaves: Some(2),
            max_depth: None,
            min_leaf_size: 1,
            eta: 1.0,
            lambda: 0.0,
            min_gain: 1e-12,
            rng_seed: 0,
        }
    }

    #[test]
    fn initial_estimates() {
        let d = Dataset::regression(vec![0.0, 0.0], 1, vec![0.0, 2.0]).unwrap();
        assert_eq!(initial_estimate(&d, LossFamily::SquaredError).unwrap(), vec![1.0]);
        let d = Dataset::binary(vec![0.0, 0.0], 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(initial_estimate(&d, LossFamily::Logistic).unwrap(), vec![0.0]);
        let d = Dataset::regression(vec![0.0], 1, vec![5.0]).unwrap();
        assert_eq!(initial_estimate(&d, LossFamily::SquaredError).unwrap(), vec![5.0]);
        let d = Dataset::binary(vec![0.0, 0.0], 1, vec![1.0, 1.0]).unwrap();
        let g = initial_estimate(&d, LossFamily::Logistic).unwrap()[0];
        assert!((g - ((1.0 - 1e-6) / 1e-6f64).ln()).abs() < 1e-9);
        assert!(initial_estimate(&d, LossFamily::SquaredError).is_err());
    }

    #[test]
    fn two_point_stump_predicts_mean() {
        let d = Dataset::regression(vec![0.0, 0.0], 1, vec![0.0, 2.0]).unwrap();
        let m = train(&d, &stump_config(), LossFamily::SquaredError).unwrap();
        assert_eq!(m.predict_raw(&[0.0]).unwrap(), vec![1.0]);
        assert_eq!(m.predict_raw(&[123.0]).unwrap(), vec![1.0]);
        let tr = m.trace(&[7.0]).unwrap();
        assert_eq!(tr.margins, vec![vec![1.0], vec![1.0]]);
        assert_eq!(tr.leaves, vec![vec![0]]);
    }

    #[test]
    fn constant_targets_give_zero_trees() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let d = Dataset::regression(xs, 1, vec![3.0; 10]).unwrap();
        let m = train(&d, &TrainConfig { n_trees: 5, min_leaf_size: 1, ..Default::default() }, LossFamily::SquaredError).unwrap();
        for tree in m.trees.iter().flatten() {
            assert_eq!(tree.leaf_count(), 1);
            assert_eq!(tree.leaves[0].value, 0.0);
        }
        assert_eq!(m.predict_raw(&[4.5]).unwrap(), vec![3.0]);
        let tr = m.trace(&[4.5]).unwrap();
        assert!(tr.margins.iter().all(|mg| mg == &vec![3.0]));
    }

    #[test]
    fn activate_binary_zero() {
        let d = Dataset::binary(vec![0.0, 1.0], 1, vec![0.0, 1.0]).unwrap();
        let m = train(&d, &stump_config(), LossFamily::Logistic).unwrap();
        assert_eq!(m.activate(&[0.0]), vec![0.5]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let d = Dataset::regression(vec![0.0, 0.0], 1, vec![0.0, 2.0]).unwrap();
        let m = train(&d, &stump_config(), LossFamily::SquaredError).unwrap();
        assert!(m.predict_raw(&[0.0, 1.0]).is_err());
        assert!(m.trace(&[]).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let d = Dataset::regression(vec![0.0, 0.0], 1, vec![0.0, 2.0]).unwrap();
        for cfg in [
            TrainConfig { n_trees: 0, ..Default::default() },
            TrainConfig { eta: 1.5, ..Default::default() },
            TrainConfig { eta: 0.0, ..Default::default() },
            TrainConfig { lambda: -1.0, ..Default::default() },
        ] {
            assert!(train(&d, &cfg, LossFamily::SquaredError).is_err());
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.731).sin()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * 3.3 + 0.1).collect();
        let d = Dataset::regression(xs, 1, ys).unwrap();
        let m = train(&d, &TrainConfig { n_trees: 7, min_leaf_size: 2, ..Default::default() }, LossFamily::SquaredError).unwrap();
        let back = GbdtModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
