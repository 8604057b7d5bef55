//! LeafInfluence and its single-point approximation LeafInfSP.
//!
//! Both differentiate every leaf value with respect to an instance weight
//! `w_i` while holding the tree structure fixed. LeafInfluence follows the
//! cascade through every training instance's intermediate prediction (an
//! `n x n` Jacobian per output); LeafInfSP tracks only `z_i`'s own.

use std::sync::Arc;

use super::internals::{safe_recip, TrainingInternals, TreeState};
use super::{EstimatorKind, InfluenceVector, Target};
use crate::error::Result;
use crate::gbdt::{Dataset, Derivatives, GbdtModel};

fn inverse_denominators(it: &TrainingInternals, st: &TreeState, include_lambda: bool) -> Vec<f64> {
    let lambda = if include_lambda { it.lambda } else { 0.0 };
    st.leaf_hess.iter().map(|h| safe_recip(h + lambda)).collect()
}

/// Source term `g + step * h` of `d theta / d w_i`, optionally minus the
/// same term for a relabelled copy of the instance.
fn source_terms(it: &TrainingInternals, y_star: Option<f64>) -> Vec<Vec<Vec<f64>>> {
    let k = it.n_outputs;
    let mut alt = vec![Derivatives::default(); k];
    it.trees
        .iter()
        .enumerate()
        .map(|(t, round)| {
            let mut per_class = vec![vec![0.0; it.n]; k];
            for i in 0..it.n {
                if let Some(y) = y_star {
                    it.derivs_with_label(t, i, y, &mut alt);
                }
                for (c, st) in round.iter().enumerate() {
                    let step = st.leaf_step[st.leaf_of[i] as usize];
                    let d = st.derivs[i];
                    let mut s = d.g + step * d.h;
                    if y_star.is_some() {
                        s -= alt[c].g + step * alt[c].h;
                    }
                    per_class[c][i] = s;
                }
            }
            per_class
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LeafInfluence {
    model: Arc<GbdtModel>,
    internals: Arc<TrainingInternals>,
    include_lambda: bool,
    source: Vec<Vec<Vec<f64>>>,
}

impl LeafInfluence {
    pub fn fit(model: Arc<GbdtModel>, dataset: Arc<Dataset>, include_lambda: bool) -> Result<Self> {
        let internals = Arc::new(TrainingInternals::compute(&model, &dataset)?);
        Ok(Self::from_internals(model, internals, include_lambda))
    }

    pub fn from_internals(model: Arc<GbdtModel>, internals: Arc<TrainingInternals>, include_lambda: bool) -> Self {
        let source = source_terms(&internals, None);
        Self {
            model,
            internals,
            include_lambda,
            source,
        }
    }

    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        let values = self.run(target, &self.source)?;
        Ok(InfluenceVector::new(EstimatorKind::LeafInfluence, Some(target.id), values))
    }

    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        self.model.loss.validate(y_star, &self.model.bias)?;
        let source = source_terms(&self.internals, Some(y_star));
        let values = self.run(target, &source)?;
        Ok(InfluenceVector::new(EstimatorKind::LeafInfluence, Some(target.id), values))
    }

    fn run(&self, target: &Target, source: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        let trace = self.model.trace(&target.x)?;
        self.model.loss.validate(target.y, &self.model.bias)?;
        let it = &*self.internals;
        let n = it.n;
        let k = it.n_outputs;
        // jac[c][i * n + j] = d f_{t}(x_j)_c / d w_i
        let mut jac = vec![vec![0.0; n * n]; k];
        let mut acc = vec![vec![0.0; n]; k];
        let mut a = vec![0.0; n];
        for (t, round) in it.trees.iter().enumerate() {
            for (c, st) in round.iter().enumerate() {
                let inv = inverse_denominators(it, st, self.include_lambda);
                let m = inv.len();
                for j in 0..n {
                    let d = st.derivs[j];
                    a[j] = d.h + st.leaf_step[st.leaf_of[j] as usize] * d.k;
                }
                let le = trace.leaves[t][c];
                let jc = &mut jac[c];
                let mut s = vec![0.0; m];
                for i in 0..n {
                    let row = &mut jc[i * n..(i + 1) * n];
                    s.iter_mut().for_each(|v| *v = 0.0);
                    if t > 0 {
                        for j in 0..n {
                            s[st.leaf_of[j] as usize] += a[j] * row[j];
                        }
                    }
                    s[st.leaf_of[i] as usize] += source[t][c][i];
                    for (v, w) in s.iter_mut().zip(&inv) {
                        *v *= -it.eta * w;
                    }
                    acc[c][i] += s[le];
                    for j in 0..n {
                        row[j] += s[st.leaf_of[j] as usize];
                    }
                }
            }
        }
        let mut grad = vec![0.0; k];
        self.model.loss.gradient_into(target.y, trace.final_margin(), &mut grad);
        Ok((0..n)
            .map(|i| -(0..k).map(|c| grad[c] * acc[c][i]).sum::<f64>())
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct LeafInfSp {
    model: Arc<GbdtModel>,
    internals: Arc<TrainingInternals>,
    include_lambda: bool,
    dtheta: Vec<Vec<Vec<f64>>>,
}

impl LeafInfSp {
    pub fn fit(model: Arc<GbdtModel>, dataset: Arc<Dataset>, include_lambda: bool) -> Result<Self> {
        let internals = Arc::new(TrainingInternals::compute(&model, &dataset)?);
        Ok(Self::from_internals(model, internals, include_lambda))
    }

    pub fn from_internals(model: Arc<GbdtModel>, internals: Arc<TrainingInternals>, include_lambda: bool) -> Self {
        let dtheta = Self::leaf_derivatives(&internals, include_lambda, None);
        Self {
            model,
            internals,
            include_lambda,
            dtheta,
        }
    }

    /// `d theta_{t, R_t(x_i)} / d w_i` with the scalar self-Jacobian.
    fn leaf_derivatives(it: &TrainingInternals, include_lambda: bool, y_star: Option<f64>) -> Vec<Vec<Vec<f64>>> {
        let k = it.n_outputs;
        let mut out: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; it.n]; k]; it.n_iterations()];
        let invs: Vec<Vec<Vec<f64>>> = it
            .trees
            .iter()
            .map(|round| round.iter().map(|st| inverse_denominators(it, st, include_lambda)).collect())
            .collect();
        let mut alt = vec![Derivatives::default(); k];
        for i in 0..it.n {
            let mut jac = vec![0.0; k];
            let mut jac_star = vec![0.0; k];
            for (t, round) in it.trees.iter().enumerate() {
                if let Some(y) = y_star {
                    it.derivs_with_label(t, i, y, &mut alt);
                }
                for (c, st) in round.iter().enumerate() {
                    let l = st.leaf_of[i] as usize;
                    let step = st.leaf_step[l];
                    let d = st.derivs[i];
                    let scale = -it.eta * invs[t][c][l];
                    let dt = scale * ((d.g + step * d.h) + (d.h + step * d.k) * jac[c]);
                    jac[c] += dt;
                    let mut v = dt;
                    if y_star.is_some() {
                        let e = alt[c];
                        let ds = scale * ((e.g + step * e.h) + (e.h + step * e.k) * jac_star[c]);
                        jac_star[c] += ds;
                        v -= ds;
                    }
                    out[t][c][i] = v;
                }
            }
        }
        out
    }

    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        let values = self.accumulate(target, &self.dtheta)?;
        Ok(InfluenceVector::new(EstimatorKind::LeafInfSp, Some(target.id), values))
    }

    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        self.model.loss.validate(y_star, &self.model.bias)?;
        let dtheta = Self::leaf_derivatives(&self.internals, self.include_lambda, Some(y_star));
        let values = self.accumulate(target, &dtheta)?;
        Ok(InfluenceVector::new(EstimatorKind::LeafInfSp, Some(target.id), values))
    }

    fn accumulate(&self, target: &Target, dtheta: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        let trace = self.model.trace(&target.x)?;
        self.model.loss.validate(target.y, &self.model.bias)?;
        let k = self.internals.n_outputs;
        let mut grad = vec![0.0; k];
        self.model.loss.gradient_into(target.y, trace.final_margin(), &mut grad);
        let mut out = vec![0.0; self.internals.n];
        for (t, round) in self.model.trees.iter().enumerate() {
            for (c, tree) in round.iter().enumerate() {
                for &i in &tree.leaves[trace.leaves[t][c]].instance_ids {
                    out[i] -= grad[c] * dtheta[t][c][i];
                }
            }
        }
        Ok(out)
    }
}
