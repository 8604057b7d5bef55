//! LeafRefit: exact fixed-structure refit of every leaf value.

use std::sync::Arc;

use super::{EstimatorKind, InfluenceVector, Target};
use crate::error::{Error, Result};
use crate::gbdt::tree::newton_leaf_value;
use crate::gbdt::{Dataset, Derivatives, GbdtModel};

/// How the refit treats instance `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Remove(usize),
    Relabel(usize, f64),
}

#[derive(Debug, Clone)]
pub struct LeafRefit {
    model: Arc<GbdtModel>,
    dataset: Arc<Dataset>,
    /// `leaf_of[t][c][i]`
    leaf_of: Vec<Vec<Vec<u32>>>,
}

impl LeafRefit {
    pub fn fit(model: Arc<GbdtModel>, dataset: Arc<Dataset>) -> Result<Self> {
        if !model.has_instance_sets() {
            return Err(Error::Precondition("model carries no leaf instance sets".into()));
        }
        model.check_trained_on(&dataset)?;
        let n = dataset.n_rows();
        let leaf_of = model
            .trees
            .iter()
            .map(|round| {
                round
                    .iter()
                    .map(|tree| {
                        let mut v = vec![0u32; n];
                        for (l, leaf) in tree.leaves.iter().enumerate() {
                            for &i in &leaf.instance_ids {
                                v[i] = l as u32;
                            }
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        Ok(Self { model, dataset, leaf_of })
    }

    /// Leaf values `[t][c][l]` after refitting under `change`.
    pub fn refit_values(&self, change: Perturbation) -> Vec<Vec<Vec<f64>>> {
        let model = &*self.model;
        let n = self.dataset.n_rows();
        let k = model.n_outputs();
        let (idx, label) = match change {
            Perturbation::Remove(i) => (i, None),
            Perturbation::Relabel(i, y) => (i, Some(y)),
        };
        let mut margins: Vec<f64> = (0..n).flat_map(|_| model.bias.iter().copied()).collect();
        let mut derivs = vec![vec![Derivatives::default(); k]; n];
        let mut out = Vec::with_capacity(model.trees.len());
        for (t, round) in model.trees.iter().enumerate() {
            for (j, d) in derivs.iter_mut().enumerate() {
                let y = if j == idx {
                    match label {
                        Some(y) => y,
                        None => continue,
                    }
                } else {
                    self.dataset.target(j)
                };
                model.loss.derivatives_into(y, &margins[j * k..(j + 1) * k], d);
            }
            let mut round_values = Vec::with_capacity(k);
            for (c, tree) in round.iter().enumerate() {
                let values: Vec<f64> = tree
                    .leaves
                    .iter()
                    .map(|leaf| {
                        let (mut g, mut h) = (0.0, 0.0);
                        for &j in &leaf.instance_ids {
                            if j == idx && label.is_none() {
                                continue;
                            }
                            g += derivs[j][c].g;
                            h += derivs[j][c].h;
                        }
                        newton_leaf_value(g, h, model.lambda, model.eta)
                    })
                    .collect();
                for (j, &l) in self.leaf_of[t][c].iter().enumerate() {
                    margins[j * k + c] += values[l as usize];
                }
                round_values.push(values);
            }
            out.push(round_values);
        }
        out
    }

    fn target_margin(&self, leaves: &[Vec<usize>], values: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let mut m = self.model.bias.clone();
        for (t, round) in values.iter().enumerate() {
            for (c, v) in round.iter().enumerate() {
                m[c] += v[leaves[t][c]];
            }
        }
        m
    }

    fn run(&self, target: &Target, change: impl Fn(usize) -> Perturbation) -> Result<Vec<f64>> {
        let trace = self.model.trace(&target.x)?;
        let loss = self.model.loss;
        let before = loss.value(target.y, trace.final_margin())?;
        Ok((0..self.dataset.n_rows())
            .map(|i| {
                let values = self.refit_values(change(i));
                let m = self.target_margin(&trace.leaves, &values);
                loss.value_unchecked(target.y, &m) - before
            })
            .collect())
    }

    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        let values = self.run(target, Perturbation::Remove)?;
        Ok(InfluenceVector::new(EstimatorKind::LeafRefit, Some(target.id), values))
    }

    /// Change in target loss when `y_i` is replaced by `y_star`, structure fixed.
    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        self.model.loss.validate(y_star, &self.model.bias)?;
        let values = self.run(target, |i| Perturbation::Relabel(i, y_star))?;
        Ok(InfluenceVector::new(EstimatorKind::LeafRefit, Some(target.id), values))
    }
}
