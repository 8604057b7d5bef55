//! Tree-kernel estimators: the leaf embedding, the TREX representer
//! surrogate and the similarity-only TreeSim.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EstimatorKind, InfluenceVector, Target};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{Dataset, GbdtModel, LossFamily};

/// Sparse leaf embedding: one slot per tree with weight `1 / n_{t,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEmbedding {
    /// Global slot index per tree, in tree order.
    pub slots: Vec<usize>,
    pub weights: Vec<f64>,
    pub dim: usize,
}

impl TreeEmbedding {
    pub fn dot(&self, other: &TreeEmbedding) -> f64 {
        self.slots
            .iter()
            .zip(&other.slots)
            .zip(self.weights.iter().zip(&other.weights))
            .filter(|((a, b), _)| a == b)
            .map(|(_, (wa, wb))| wa * wb)
            .sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (&s, &w) in self.slots.iter().zip(&self.weights) {
            v[s] += w;
        }
        v
    }
}

pub fn embed(model: &GbdtModel, x: &[f64]) -> Result<TreeEmbedding> {
    if x.len() != model.n_features {
        return Err(invalid(format!(
            "instance has {} features, model expects {}",
            x.len(),
            model.n_features
        )));
    }
    let mut offset = 0;
    let mut slots = Vec::new();
    let mut weights = Vec::new();
    for tree in model.trees.iter().flatten() {
        let l = tree.leaf_index(x);
        slots.push(offset + l);
        weights.push(1.0 / tree.leaves[l].count as f64);
        offset += tree.leaf_count();
    }
    Ok(TreeEmbedding { slots, weights, dim: offset })
}

/// Leaf membership of every training row across all trees.
#[derive(Debug, Clone)]
struct LeafKernel {
    n: usize,
    /// Per flattened tree: leaf of every row.
    leaf_of: Vec<Vec<u32>>,
    /// Per flattened tree: `1 / n_l^2`.
    inv_sq: Vec<Vec<f64>>,
}

impl LeafKernel {
    fn new(model: &GbdtModel, dataset: &Dataset) -> Result<Self> {
        if !model.has_instance_sets() {
            return Err(Error::Precondition("model carries no leaf instance sets".into()));
        }
        model.check_trained_on(dataset)?;
        let n = dataset.n_rows();
        let mut leaf_of = Vec::new();
        let mut inv_sq = Vec::new();
        for tree in model.trees.iter().flatten() {
            let mut v = vec![0u32; n];
            for (l, leaf) in tree.leaves.iter().enumerate() {
                for &i in &leaf.instance_ids {
                    v[i] = l as u32;
                }
            }
            leaf_of.push(v);
            inv_sq.push(tree.leaves.iter().map(|l| 1.0 / (l.count as f64).powi(2)).collect());
        }
        Ok(Self { n, leaf_of, inv_sq })
    }

    /// Target leaves across the flattened trees.
    fn target_leaves(model: &GbdtModel, x: &[f64]) -> Vec<usize> {
        model.trees.iter().flatten().map(|t| t.leaf_index(x)).collect()
    }

    /// `<f_i, f_e>` for every training row.
    fn similarities(&self, leaves: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (tree, &le) in leaves.iter().enumerate() {
            let w = self.inv_sq[tree][le];
            for (o, &l) in out.iter_mut().zip(&self.leaf_of[tree]) {
                if l as usize == le {
                    *o += w;
                }
            }
        }
        out
    }

    /// `K alpha` at the training rows; `alpha` and the result are `n x k`.
    fn apply(&self, alpha: &[f64], k: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (leaf_of, inv_sq) in self.leaf_of.iter().zip(&self.inv_sq) {
            let mut sums = vec![0.0; inv_sq.len() * k];
            for (i, &l) in leaf_of.iter().enumerate() {
                for c in 0..k {
                    sums[l as usize * k + c] += alpha[i * k + c];
                }
            }
            for (i, &l) in leaf_of.iter().enumerate() {
                let w = inv_sq[l as usize];
                for c in 0..k {
                    out[i * k + c] += w * sums[l as usize * k + c];
                }
            }
        }
    }

    /// Largest row sum of the kernel, an upper bound on its spectral radius.
    fn max_row_sum(&self) -> f64 {
        let mut sums = vec![0.0; self.n];
        for (leaf_of, inv_sq) in self.leaf_of.iter().zip(&self.inv_sq) {
            for (s, &l) in sums.iter_mut().zip(leaf_of) {
                // n_l * (1 / n_l^2)
                *s += inv_sq[l as usize].sqrt();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrexConfig {
    pub lambda_reg: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Consecutive residual increases treated as divergence.
    pub divergence_window: usize,
}

impl Default for TrexConfig {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-3,
            tolerance: 1e-8,
            max_iterations: 10_000,
            divergence_window: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// `max_i |alpha_i + c * dl/dy_i|` at the returned alphas.
    pub residual: f64,
    pub damping: f64,
    pub converged: bool,
}

/// Kernel surrogate `y*(x) = sum_j alpha_j <f_j, f(x)>` on the training set.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    model: Arc<GbdtModel>,
    dataset: Arc<Dataset>,
    kernel: LeafKernel,
    /// `n x n_outputs`, row-major.
    pub alphas: Vec<f64>,
    pub lambda_reg: f64,
    pub report: ConvergenceReport,
}

fn curvature_bound(loss: LossFamily) -> f64 {
    match loss {
        LossFamily::SquaredError => 1.0,
        LossFamily::Logistic => 0.25,
        LossFamily::Softmax => 0.5,
    }
}

impl SurrogateModel {
    pub fn fit(model: Arc<GbdtModel>, dataset: Arc<Dataset>, cfg: &TrexConfig) -> Result<Self> {
        if !(cfg.lambda_reg > 0.0 && cfg.lambda_reg.is_finite()) {
            return Err(invalid("lambda_reg must be positive and finite"));
        }
        if !(cfg.tolerance > 0.0) || cfg.max_iterations == 0 {
            return Err(invalid("tolerance must be positive and max_iterations at least 1"));
        }
        let kernel = LeafKernel::new(&model, &dataset)?;
        let n = dataset.n_rows();
        let k = model.n_outputs();
        let loss = model.loss;
        let scale = 1.0 / (2.0 * cfg.lambda_reg * n as f64);
        let damping = 0.5f64.min(1.0 / (1.0 + scale * curvature_bound(loss) * kernel.max_row_sum()));

        let mut alpha = vec![0.0; n * k];
        let mut pred = vec![0.0; n * k];
        let mut target = vec![0.0; n * k];
        let mut trajectory = Vec::new();
        let mut prev = f64::INFINITY;
        let mut rising = 0;
        let mut iterations = 0;
        let mut residual;
        loop {
            kernel.apply(&alpha, k, &mut pred);
            for i in 0..n {
                let out = &mut target[i * k..(i + 1) * k];
                loss.gradient_into(dataset.target(i), &pred[i * k..(i + 1) * k], out);
                out.iter_mut().for_each(|g| *g *= -scale);
            }
            residual = alpha
                .iter()
                .zip(&target)
                .map(|(a, f)| (a - f).abs())
                .fold(0.0, f64::max);
            trajectory.push(residual);
            if residual < cfg.tolerance || iterations == cfg.max_iterations {
                break;
            }
            if residual > prev {
                rising += 1;
                if rising >= cfg.divergence_window {
                    return Err(Error::NonConvergence {
                        iterations,
                        residual,
                        trajectory,
                    });
                }
            } else {
                rising = 0;
            }
            prev = residual;
            for (a, f) in alpha.iter_mut().zip(&target) {
                *a += damping * (f - *a);
            }
            iterations += 1;
        }
        let converged = residual < cfg.tolerance;
        if !converged {
            log::warn!("trex: residual {residual:e} after {iterations} iterations");
        }
        Ok(Self {
            model,
            dataset,
            kernel,
            alphas: alpha,
            lambda_reg: cfg.lambda_reg,
            report: ConvergenceReport {
                iterations,
                residual,
                damping,
                converged,
            },
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.model.n_outputs()
    }

    pub fn alpha(&self, i: usize) -> &[f64] {
        let k = self.n_outputs();
        &self.alphas[i * k..(i + 1) * k]
    }

    /// Surrogate predictions at the training rows.
    pub fn train_predictions(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.alphas.len()];
        self.kernel.apply(&self.alphas, self.n_outputs(), &mut out);
        out
    }

    /// Training-row similarities `<f_i, f_e>` and the surrogate prediction
    /// `y_e*` for a target.
    pub fn decompose(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        embed(&self.model, x)?;
        let leaves = LeafKernel::target_leaves(&self.model, x);
        let sims = self.kernel.similarities(&leaves);
        let k = self.n_outputs();
        let mut pred = vec![0.0; k];
        for (i, s) in sims.iter().enumerate() {
            for c in 0..k {
                pred[c] += self.alphas[i * k + c] * s;
            }
        }
        Ok((sims, pred))
    }

    fn check_converged(&self) -> Result<()> {
        if !self.report.converged {
            return Err(Error::Precondition(format!(
                "trex surrogate did not converge (residual {:e})",
                self.report.residual
            )));
        }
        Ok(())
    }

    fn removal_effect(&self, y: f64, pred: &[f64], alpha: &[f64], sim: f64, base: f64) -> f64 {
        if sim == 0.0 {
            return 0.0;
        }
        let shifted: Vec<f64> = pred.iter().zip(alpha).map(|(p, a)| p - a * sim).collect();
        self.model.loss.value_unchecked(y, &shifted) - base
    }

    /// `loss(y_e* - alpha_i <f_i, f_e>) - loss(y_e*)`.
    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        self.check_converged()?;
        let (sims, pred) = self.decompose(&target.x)?;
        let base = self.model.loss.value(target.y, &pred)?;
        let values = (0..sims.len())
            .map(|i| self.removal_effect(target.y, &pred, self.alpha(i), sims[i], base))
            .collect();
        Ok(InfluenceVector::new(EstimatorKind::Trex, Some(target.id), values))
    }

    /// `I(z_i) - I(z_i*)`, with `alpha_i*` from the stationarity condition
    /// at `y_star`.
    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        self.check_converged()?;
        let loss = self.model.loss;
        loss.validate(y_star, &self.model.bias)?;
        let (sims, pred) = self.decompose(&target.x)?;
        let base = loss.value(target.y, &pred)?;
        let k = self.n_outputs();
        let n = sims.len();
        let scale = 1.0 / (2.0 * self.lambda_reg * n as f64);
        let train_pred = self.train_predictions();
        let mut alt = vec![0.0; k];
        let values = (0..n)
            .map(|i| {
                if self.dataset.target(i) == y_star || sims[i] == 0.0 {
                    return 0.0;
                }
                loss.gradient_into(y_star, &train_pred[i * k..(i + 1) * k], &mut alt);
                alt.iter_mut().for_each(|g| *g *= -scale);
                self.removal_effect(target.y, &pred, self.alpha(i), sims[i], base)
                    - self.removal_effect(target.y, &pred, &alt, sims[i], base)
            })
            .collect();
        Ok(InfluenceVector::new(EstimatorKind::Trex, Some(target.id), values))
    }
}

/// Signed tree-kernel similarity.
#[derive(Debug, Clone)]
pub struct TreeSim {
    model: Arc<GbdtModel>,
    dataset: Arc<Dataset>,
    kernel: LeafKernel,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl TreeSim {
    pub fn fit(model: Arc<GbdtModel>, dataset: Arc<Dataset>) -> Result<Self> {
        let kernel = LeafKernel::new(&model, &dataset)?;
        Ok(Self { model, dataset, kernel })
    }

    /// `+1` when `y` counts as the target's label, else `-1`.
    fn label_sign(&self, y: f64, target: &Target, prediction: f64) -> f64 {
        let same = if self.model.task().is_classification() {
            y == target.y
        } else {
            sign(prediction - y) == sign(prediction - target.y)
        };
        if same {
            1.0
        } else {
            -1.0
        }
    }

    fn parts(&self, target: &Target) -> Result<(Vec<f64>, f64)> {
        embed(&self.model, &target.x)?;
        self.model.loss.validate(target.y, &self.model.bias)?;
        let leaves = LeafKernel::target_leaves(&self.model, &target.x);
        let prediction = self.model.predict_label(&target.x)?;
        Ok((self.kernel.similarities(&leaves), prediction))
    }

    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        let (sims, pred) = self.parts(target)?;
        let values = sims
            .iter()
            .enumerate()
            .map(|(i, s)| self.label_sign(self.dataset.target(i), target, pred) * s)
            .collect();
        Ok(InfluenceVector::new(EstimatorKind::TreeSim, Some(target.id), values))
    }

    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        self.model.loss.validate(y_star, &self.model.bias)?;
        let (sims, pred) = self.parts(target)?;
        let star = self.label_sign(y_star, target, pred);
        let values = sims
            .iter()
            .enumerate()
            .map(|(i, s)| (self.label_sign(self.dataset.target(i), target, pred) - star) * s)
            .collect();
        Ok(InfluenceVector::new(EstimatorKind::TreeSim, Some(target.id), values))
    }
}
