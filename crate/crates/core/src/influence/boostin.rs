//! BoostIn: per-checkpoint marginal effect of each leaf value on the loss.

use std::sync::Arc;

use super::internals::{safe_recip, TrainingInternals};
use super::{EstimatorKind, InfluenceVector, Target};
use crate::error::Result;
use crate::gbdt::{Dataset, Derivatives, GbdtModel};

#[derive(Debug, Clone)]
pub struct BoostIn {
    model: Arc<GbdtModel>,
    dataset: Arc<Dataset>,
    internals: Arc<TrainingInternals>,
    /// `coef[t][c][i] = eta * (g + h * step) / (H + lambda)` at row i's leaf.
    coef: Vec<Vec<Vec<f64>>>,
}

impl BoostIn {
    pub fn fit(model: Arc<GbdtModel>, dataset: Arc<Dataset>) -> Result<Self> {
        let internals = Arc::new(TrainingInternals::compute(&model, &dataset)?);
        Ok(Self::from_internals(model, dataset, internals))
    }

    pub fn from_internals(model: Arc<GbdtModel>, dataset: Arc<Dataset>, internals: Arc<TrainingInternals>) -> Self {
        let eta = internals.eta;
        let coef = internals
            .trees
            .iter()
            .map(|round| {
                round
                    .iter()
                    .map(|st| {
                        let inv: Vec<f64> = st
                            .leaf_hess
                            .iter()
                            .map(|h| safe_recip(h + internals.lambda))
                            .collect();
                        st.derivs
                            .iter()
                            .zip(&st.leaf_of)
                            .map(|(d, &l)| {
                                let l = l as usize;
                                eta * (d.g + d.h * st.leaf_step[l]) * inv[l]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            model,
            dataset,
            internals,
            coef,
        }
    }

    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        let values = self.accumulate(target, &self.coef)?;
        Ok(InfluenceVector::new(EstimatorKind::BoostIn, Some(target.id), values))
    }

    /// `I(z_i) - I(z_i*)` with every `y_i` replaced by `y_star`.
    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        self.model.loss.validate(y_star, &self.model.bias)?;
        let it = &self.internals;
        let k = it.n_outputs;
        let mut alt = vec![Derivatives::default(); k];
        let mut diff = self.coef.clone();
        for (t, round) in it.trees.iter().enumerate() {
            for i in 0..it.n {
                it.derivs_with_label(t, i, y_star, &mut alt);
                for (c, st) in round.iter().enumerate() {
                    let l = st.leaf_of[i] as usize;
                    let star = it.eta * (alt[c].g + alt[c].h * st.leaf_step[l]) * safe_recip(st.leaf_hess[l] + it.lambda);
                    diff[t][c][i] -= star;
                }
            }
        }
        let values = self.accumulate(target, &diff)?;
        Ok(InfluenceVector::new(EstimatorKind::BoostIn, Some(target.id), values))
    }

    fn accumulate(&self, target: &Target, coef: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        let trace = self.model.trace(&target.x)?;
        self.model.loss.validate(target.y, &self.model.bias)?;
        let k = self.internals.n_outputs;
        let mut grad = vec![0.0; k];
        let mut out = vec![0.0; self.internals.n];
        for (t, round) in self.model.trees.iter().enumerate() {
            self.model.loss.gradient_into(target.y, &trace.margins[t + 1], &mut grad);
            for (c, tree) in round.iter().enumerate() {
                let leaf = &tree.leaves[trace.leaves[t][c]];
                for &i in &leaf.instance_ids {
                    out[i] += grad[c] * coef[t][c][i];
                }
            }
        }
        Ok(out)
    }

    /// Each training instance's influence on its own loss.
    pub fn self_influence(&self) -> InfluenceVector {
        let it = &self.internals;
        let k = it.n_outputs;
        let mut grad = vec![0.0; k];
        let mut out = vec![0.0; it.n];
        for t in 0..it.n_iterations() {
            for (i, o) in out.iter_mut().enumerate() {
                self.model.loss.gradient_into(self.dataset.target(i), it.margin(t + 1, i), &mut grad);
                for c in 0..k {
                    *o += grad[c] * self.coef[t][c][i];
                }
            }
        }
        InfluenceVector::new(EstimatorKind::BoostIn, None, out)
    }
}
