//! Training-data influence estimators.
//!
//! Every estimator reports values under one convention: a positive value
//! marks a proponent (its presence lowers the target's loss), a negative
//! value an opponent.

pub mod baselines;
pub mod boostin;
pub mod explainer;
pub mod internals;
pub mod kernel;
pub mod leaf_influence;
pub mod leaf_refit;
pub mod loo;
pub mod output;
pub mod retrain;
pub mod subsample;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use explainer::{EstimatorOptions, Explainer};
pub use retrain::{ModelCache, Retrainer};
pub use subsample::SubSampleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Loo,
    #[serde(rename = "subsample")]
    SubSample,
    #[serde(rename = "leafrefit")]
    LeafRefit,
    #[serde(rename = "leafinfluence")]
    LeafInfluence,
    #[serde(rename = "leafinfsp")]
    LeafInfSp,
    #[serde(rename = "boostin")]
    BoostIn,
    Trex,
    #[serde(rename = "treesim")]
    TreeSim,
    Random,
    RandomSl,
    Loss,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 11] = [
        EstimatorKind::Loo,
        EstimatorKind::SubSample,
        EstimatorKind::LeafRefit,
        EstimatorKind::LeafInfluence,
        EstimatorKind::LeafInfSp,
        EstimatorKind::BoostIn,
        EstimatorKind::Trex,
        EstimatorKind::TreeSim,
        EstimatorKind::Random,
        EstimatorKind::RandomSl,
        EstimatorKind::Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Loo => "loo",
            EstimatorKind::SubSample => "subsample",
            EstimatorKind::LeafRefit => "leafrefit",
            EstimatorKind::LeafInfluence => "leafinfluence",
            EstimatorKind::LeafInfSp => "leafinfsp",
            EstimatorKind::BoostIn => "boostin",
            EstimatorKind::Trex => "trex",
            EstimatorKind::TreeSim => "treesim",
            EstimatorKind::Random => "random",
            EstimatorKind::RandomSl => "random_sl",
            EstimatorKind::Loss => "loss",
        }
    }

    /// Estimators that keep the trained tree structure fixed.
    pub fn is_fixed_structure(self) -> bool {
        matches!(
            self,
            EstimatorKind::LeafRefit
                | EstimatorKind::LeafInfluence
                | EstimatorKind::LeafInfSp
                | EstimatorKind::BoostIn
                | EstimatorKind::Trex
                | EstimatorKind::TreeSim
        )
    }

    pub fn supports_edits(self) -> bool {
        matches!(
            self,
            EstimatorKind::Loo
                | EstimatorKind::LeafRefit
                | EstimatorKind::LeafInfluence
                | EstimatorKind::LeafInfSp
                | EstimatorKind::BoostIn
                | EstimatorKind::Trex
                | EstimatorKind::TreeSim
        )
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| invalid(format!("unknown estimator `{s}`; valid estimators: {}", Self::valid_names())))
    }
}

/// The instance whose loss influence is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub id: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

impl Target {
    pub fn new(id: usize, x: Vec<f64>, y: f64) -> Self {
        Self { id, x, y }
    }

    pub fn from_row(dataset: &crate::gbdt::Dataset, i: usize) -> Self {
        Self::new(i, dataset.row(i).to_vec(), dataset.target(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Positive values reduce the target's loss.
    #[default]
    ProponentPositive,
}

/// Influence of every training instance on one target (or an aggregate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceVector {
    pub estimator: EstimatorKind,
    /// `None` for vectors aggregated over several targets.
    pub target_id: Option<usize>,
    pub convention: SignConvention,
    pub values: Vec<f64>,
}

impl InfluenceVector {
    pub fn new(estimator: EstimatorKind, target_id: Option<usize>, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()), "{estimator}: non-finite influence");
        Self {
            estimator,
            target_id,
            convention: SignConvention::ProponentPositive,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Training indices from most positive to most negative; ties by index.
    pub fn ranking_descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    /// Training indices from most negative to most positive; ties by index.
    pub fn ranking_ascending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        idx
    }
}

/// Elementwise sum of per-target vectors from one estimator.
pub fn aggregate_influence(vectors: &[InfluenceVector]) -> Result<InfluenceVector> {
    let first = vectors.first().ok_or_else(|| invalid("nothing to aggregate"))?;
    let mut sum = vec![0.0; first.len()];
    for v in vectors {
        if v.estimator != first.estimator {
            return Err(invalid(format!(
                "cannot aggregate {} with {}",
                first.estimator, v.estimator
            )));
        }
        if v.len() != first.len() {
            return Err(invalid("influence vectors differ in length"));
        }
        for (s, x) in sum.iter_mut().zip(&v.values) {
            *s += x;
        }
    }
    let target_id = if vectors.len() == 1 { first.target_id } else { None };
    Ok(InfluenceVector::new(first.estimator, target_id, sum))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(values: Vec<f64>) -> InfluenceVector {
        InfluenceVector::new(EstimatorKind::BoostIn, Some(0), values)
    }

    #[test]
    fn aggregate_cases() {
        let v = iv(vec![1.0, -2.0, 0.5]);
        assert_eq!(aggregate_influence(std::slice::from_ref(&v)).unwrap().values, v.values);
        let neg = iv(v.values.iter().map(|x| -x).collect());
        assert_eq!(aggregate_influence(&[v.clone(), neg]).unwrap().values, vec![0.0; 3]);
        let three = aggregate_influence(&[v.clone(), v.clone(), v.clone()]).unwrap();
        assert_eq!(three.values, vec![3.0, -6.0, 1.5]);
        let other = InfluenceVector::new(EstimatorKind::Trex, Some(0), vec![0.0; 3]);
        assert!(aggregate_influence(&[v, other]).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in EstimatorKind::ALL {
            assert_eq!(e.name().parse::<EstimatorKind>().unwrap(), e);
            let json = serde_json::to_string(&e).unwrap();
            assert_eq!(json, format!("\"{}\"", e.name()));
        }
        let err = "bogus".parse::<EstimatorKind>().unwrap_err().to_string();
        assert!(err.contains("boostin") && err.contains("random_sl"));
    }

    #[test]
    fn rankings_break_ties_by_index() {
        let v = iv(vec![1.0, 3.0, 1.0, -1.0]);
        assert_eq!(v.ranking_descending(), vec![1, 0, 2, 3]);
        assert_eq!(v.ranking_ascending(), vec![3, 0, 2, 1]);
    }
}
