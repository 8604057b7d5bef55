//! Per-iteration training state reconstructed from a trained model.

use crate::error::{Error, Result};
use crate::gbdt::{Dataset, Derivatives, GbdtModel, LossFamily};

/// State of one tree `(t, c)` as seen during training.
#[derive(Debug, Clone)]
pub struct TreeState {
    /// Leaf index of every training row.
    pub leaf_of: Vec<u32>,
    /// Loss derivatives for output `c` at `f_{t-1}(x_i)`.
    pub derivs: Vec<Derivatives>,
    /// `sum(h)` over each leaf.
    pub leaf_hess: Vec<f64>,
    /// Unshrunk Newton step `theta / eta` of each leaf.
    pub leaf_step: Vec<f64>,
}

/// Training-time internals for every tree of a model.
#[derive(Debug, Clone)]
pub struct TrainingInternals {
    pub n: usize,
    pub n_outputs: usize,
    pub eta: f64,
    pub lambda: f64,
    pub loss: LossFamily,
    /// `trees[t][c]`
    pub trees: Vec<Vec<TreeState>>,
    /// `margins[t]` holds `f_t(x_i)` for every row, row-major by instance.
    pub margins: Vec<Vec<f64>>,
}

impl TrainingInternals {
    pub fn compute(model: &GbdtModel, dataset: &Dataset) -> Result<Self> {
        if !model.has_instance_sets() {
            return Err(Error::Precondition("model carries no leaf instance sets".into()));
        }
        model.check_trained_on(dataset)?;
        let n = dataset.n_rows();
        let k = model.n_outputs();
        let mut margins: Vec<f64> = (0..n).flat_map(|_| model.bias.iter().copied()).collect();
        let mut scratch = vec![Derivatives::default(); k];
        let mut trees = Vec::with_capacity(model.trees.len());
        let mut history = Vec::with_capacity(model.trees.len() + 1);
        history.push(margins.clone());
        for round in &model.trees {
            let mut per_class: Vec<Vec<Derivatives>> = vec![Vec::with_capacity(n); k];
            for i in 0..n {
                model
                    .loss
                    .derivatives_into(dataset.target(i), &margins[i * k..(i + 1) * k], &mut scratch);
                for c in 0..k {
                    per_class[c].push(scratch[c]);
                }
            }
            let mut states = Vec::with_capacity(k);
            for (c, (tree, derivs)) in round.iter().zip(per_class).enumerate() {
                let mut leaf_of = vec![0u32; n];
                let mut leaf_hess = Vec::with_capacity(tree.leaf_count());
                let mut leaf_step = Vec::with_capacity(tree.leaf_count());
                for (l, leaf) in tree.leaves.iter().enumerate() {
                    let mut hs = 0.0;
                    for &i in &leaf.instance_ids {
                        leaf_of[i] = l as u32;
                        hs += derivs[i].h;
                        margins[i * k + c] += leaf.value;
                    }
                    leaf_hess.push(hs);
                    leaf_step.push(leaf.value / model.eta);
                }
                states.push(TreeState {
                    leaf_of,
                    derivs,
                    leaf_hess,
                    leaf_step,
                });
            }
            trees.push(states);
            history.push(margins.clone());
        }
        Ok(Self {
            n,
            n_outputs: k,
            eta: model.eta,
            lambda: model.lambda,
            loss: model.loss,
            trees,
            margins: history,
        })
    }

    pub fn n_iterations(&self) -> usize {
        self.trees.len()
    }

    /// `f_t(x_i)` for every output.
    pub fn margin(&self, t: usize, i: usize) -> &[f64] {
        let k = self.n_outputs;
        &self.margins[t][i * k..(i + 1) * k]
    }

    pub fn final_margin(&self, i: usize) -> &[f64] {
        self.margin(self.trees.len(), i)
    }

    /// Derivatives of tree `(t, c)`'s loss for row `i` relabelled to `y`.
    pub fn derivs_with_label(&self, t: usize, i: usize, y: f64, out: &mut [Derivatives]) {
        self.loss.derivatives_into(y, self.margin(t, i), out);
    }

    /// Denominator `sum(h) + lambda` of leaf `l` in tree `(t, c)`.
    pub fn denominator(&self, t: usize, c: usize, l: usize, include_lambda: bool) -> f64 {
        let h = self.trees[t][c].leaf_hess[l];
        if include_lambda {
            h + self.lambda
        } else {
            h
        }
    }
}

/// `1 / denom`, or 0 under the hessian floor.
#[inline]
pub(crate) fn safe_recip(denom: f64) -> f64 {
    if denom < crate::gbdt::tree::HESSIAN_FLOOR {
        0.0
    } else {
        1.0 / denom
    }
}
