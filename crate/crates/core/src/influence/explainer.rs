//! Uniform front end over every estimator.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{loss_baseline, random_influence, random_sl};
use super::boostin::BoostIn;
use super::internals::TrainingInternals;
use super::kernel::{SurrogateModel, TreeSim, TrexConfig};
use super::leaf_influence::{LeafInfSp, LeafInfluence};
use super::leaf_refit::LeafRefit;
use super::loo::Loo;
use super::subsample::{SubSample, SubSampleConfig};
use super::{EstimatorKind, InfluenceVector, Retrainer, Target};
use crate::error::{Error, Result};
use crate::gbdt::{Dataset, GbdtModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EstimatorOptions {
    /// Drop `lambda` from the LeafInfluence and LeafInfSP denominators.
    pub paper_exact_denominators: bool,
    pub subsample: SubSampleConfig,
    pub trex: TrexConfig,
    /// Seed for the random baselines.
    pub seed: u64,
}

/// A fitted estimator, ready to score targets.
#[derive(Debug)]
pub enum Explainer {
    Loo(Box<Loo>),
    SubSample(SubSample),
    LeafRefit(LeafRefit),
    LeafInfluence(LeafInfluence),
    LeafInfSp(LeafInfSp),
    BoostIn(BoostIn),
    Trex(SurrogateModel),
    TreeSim(TreeSim),
    Random { n: usize, seed: u64 },
    RandomSl { dataset: Arc<Dataset>, seed: u64 },
    Loss(InfluenceVector),
}

impl Explainer {
    /// Fits `kind` for `model`, which must have been trained by `retrainer`
    /// on its full dataset.
    pub fn fit(kind: EstimatorKind, model: Arc<GbdtModel>, retrainer: &Retrainer, opts: &EstimatorOptions) -> Result<Self> {
        let dataset = retrainer.dataset().clone();
        model.check_trained_on(&dataset)?;
        let include_lambda = !opts.paper_exact_denominators;
        let internals = || TrainingInternals::compute(&model, &dataset).map(Arc::new);
        Ok(match kind {
            EstimatorKind::Loo => Explainer::Loo(Box::new(Loo::fit(retrainer.clone())?)),
            EstimatorKind::SubSample => Explainer::SubSample(SubSample::fit(retrainer, &opts.subsample)?),
            EstimatorKind::LeafRefit => Explainer::LeafRefit(LeafRefit::fit(model, dataset)?),
            EstimatorKind::LeafInfluence => {
                Explainer::LeafInfluence(LeafInfluence::from_internals(model.clone(), internals()?, include_lambda))
            }
            EstimatorKind::LeafInfSp => {
                Explainer::LeafInfSp(LeafInfSp::from_internals(model.clone(), internals()?, include_lambda))
            }
            EstimatorKind::BoostIn => {
                let it = internals()?;
                Explainer::BoostIn(BoostIn::from_internals(model, dataset, it))
            }
            EstimatorKind::Trex => Explainer::Trex(SurrogateModel::fit(model, dataset, &opts.trex)?),
            EstimatorKind::TreeSim => Explainer::TreeSim(TreeSim::fit(model, dataset)?),
            EstimatorKind::Random => Explainer::Random {
                n: dataset.n_rows(),
                seed: opts.seed,
            },
            EstimatorKind::RandomSl => Explainer::RandomSl { dataset, seed: opts.seed },
            EstimatorKind::Loss => Explainer::Loss(loss_baseline(&model, &dataset)?),
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Explainer::Loo(_) => EstimatorKind::Loo,
            Explainer::SubSample(_) => EstimatorKind::SubSample,
            Explainer::LeafRefit(_) => EstimatorKind::LeafRefit,
            Explainer::LeafInfluence(_) => EstimatorKind::LeafInfluence,
            Explainer::LeafInfSp(_) => EstimatorKind::LeafInfSp,
            Explainer::BoostIn(_) => EstimatorKind::BoostIn,
            Explainer::Trex(_) => EstimatorKind::Trex,
            Explainer::TreeSim(_) => EstimatorKind::TreeSim,
            Explainer::Random { .. } => EstimatorKind::Random,
            Explainer::RandomSl { .. } => EstimatorKind::RandomSl,
            Explainer::Loss(_) => EstimatorKind::Loss,
        }
    }

    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        match self {
            Explainer::Loo(e) => e.influence(target),
            Explainer::SubSample(e) => e.influence(target),
            Explainer::LeafRefit(e) => e.influence(target),
            Explainer::LeafInfluence(e) => e.influence(target),
            Explainer::LeafInfSp(e) => e.influence(target),
            Explainer::BoostIn(e) => e.influence(target),
            Explainer::Trex(e) => e.influence(target),
            Explainer::TreeSim(e) => e.influence(target),
            Explainer::Random { n, seed } => Ok(random_influence(*n, *seed, target.id)),
            Explainer::RandomSl { dataset, seed } => random_sl(dataset, target, *seed),
            Explainer::Loss(v) => Ok(InfluenceVector::new(EstimatorKind::Loss, Some(target.id), v.values.clone())),
        }
    }

    /// Influence of replacing each `y_i` with `y_star` on the target's loss.
    pub fn edit_influence(&self, target: &Target, y_star: f64) -> Result<InfluenceVector> {
        match self {
            Explainer::Loo(e) => e.edit_influence(target, y_star),
            Explainer::LeafRefit(e) => e.edit_influence(target, y_star),
            Explainer::LeafInfluence(e) => e.edit_influence(target, y_star),
            Explainer::LeafInfSp(e) => e.edit_influence(target, y_star),
            Explainer::BoostIn(e) => e.edit_influence(target, y_star),
            Explainer::Trex(e) => e.edit_influence(target, y_star),
            Explainer::TreeSim(e) => e.edit_influence(target, y_star),
            other => Err(Error::UnsupportedEstimator(other.kind().name().into())),
        }
    }

    /// Per-target vectors, computed in parallel, in input order.
    pub fn influence_many(&self, targets: &[Target]) -> Result<Vec<InfluenceVector>> {
        match self {
            // One n x n Jacobian per call; run serially to bound memory.
            Explainer::LeafInfluence(_) => targets.iter().map(|t| self.influence(t)).collect(),
            _ => targets.par_iter().map(|t| self.influence(t)).collect(),
        }
    }

    /// Self-influence ordering, available for BoostIn only.
    pub fn self_influence(&self) -> Option<InfluenceVector> {
        match self {
            Explainer::BoostIn(e) => Some(e.self_influence()),
            _ => None,
        }
    }
}
