//! Leave-one-out: exact retraining without each training instance.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use rayon::prelude::*;

use super::{EstimatorKind, InfluenceVector, Retrainer, Target};
use crate::error::Result;
use crate::gbdt::GbdtModel;

/// One retrained model per removed instance.
#[derive(Debug)]
pub struct Loo {
    retrainer: Retrainer,
    full: Arc<GbdtModel>,
    without: Vec<Arc<GbdtModel>>,
    /// Models retrained with one label replaced, keyed by the new label's bits.
    edited: Mutex<HashMap<u64, Arc<Vec<Arc<GbdtModel>>>>>,
}

impl Loo {
    pub fn fit(retrainer: Retrainer) -> Result<Self> {
        let full = Arc::new(retrainer.train_full()?.compact());
        let without = (0..retrainer.n())
            .into_par_iter()
            .map(|i| retrainer.compact_on(&retrainer.complement(&[i])?, &[]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            retrainer,
            full,
            without,
            edited: Mutex::new(HashMap::new()),
        })
    }

    pub fn models(&self) -> &[Arc<GbdtModel>] {
        &self.without
    }

    fn diff(&self, target: &Target, models: &[Arc<GbdtModel>]) -> Result<Vec<f64>> {
        let before = self.full.loss_at(&target.x, target.y)?;
        models
            .iter()
            .map(|m| Ok(m.loss_at(&target.x, target.y)? - before))
            .collect()
    }

    /// `loss(without z_i) - loss(full)`: positive for proponents.
    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        let values = self.diff(target, &self.without)?;
        Ok(InfluenceVector::new(EstimatorKind::Loo, Some(target.id), values))
    }

    /// Exact change in target loss when `y_i` is retrained as `y_star`.
    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        self.full.loss.validate(y_star, &self.full.bias)?;
        let models = self.edited_models(y_star)?;
        let values = self.diff(target, &models)?;
        Ok(InfluenceVector::new(EstimatorKind::Loo, Some(target.id), values))
    }

    fn edited_models(&self, y_star: f64) -> Result<Arc<Vec<Arc<GbdtModel>>>> {
        if let Some(m) = self.edited.lock().get(&y_star.to_bits()) {
            return Ok(m.clone());
        }
        let r = &self.retrainer;
        let all: Vec<usize> = (0..r.n()).collect();
        let models = (0..r.n())
            .into_par_iter()
            .map(|i| {
                if r.dataset().target(i) == y_star {
                    Ok(self.full.clone())
                } else {
                    r.compact_on(&all, &[(i, y_star)])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let models = Arc::new(models);
        self.edited.lock().insert(y_star.to_bits(), models.clone());
        Ok(models)
    }
}
