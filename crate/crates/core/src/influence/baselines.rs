//! Reference orderings that use no model internals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{EstimatorKind, InfluenceVector, Target};
use crate::error::Result;
use crate::gbdt::{Dataset, GbdtModel};

/// Stream seed for one target, so every target gets its own draw.
fn target_rng(seed: u64, target_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(target_id as u64);
    rng
}

/// i.i.d. standard normal values.
pub fn random_influence(n: usize, seed: u64, target_id: usize) -> InfluenceVector {
    let mut rng = target_rng(seed, target_id);
    let values = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    InfluenceVector::new(EstimatorKind::Random, Some(target_id), values)
}

/// Random magnitudes signed by label agreement with the target.
///
/// Regression draws from `N(1 / |y_i - y_e|, sd)` where `sd` is the
/// population standard deviation of `|y_i - y_e|`.
pub fn random_sl(dataset: &Dataset, target: &Target, seed: u64) -> Result<InfluenceVector> {
    let mut rng = target_rng(seed, target.id);
    let values = if dataset.task().is_classification() {
        dataset
            .targets()
            .iter()
            .map(|&y| {
                let u: f64 = rng.random();
                if y == target.y {
                    u
                } else {
                    -u
                }
            })
            .collect()
    } else {
        let gaps: Vec<f64> = dataset.targets().iter().map(|y| (y - target.y).abs()).collect();
        let n = gaps.len() as f64;
        let mean = gaps.iter().sum::<f64>() / n;
        let sd = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n).sqrt();
        gaps.iter()
            .map(|g| {
                let mu = 1.0 / g.max(1e-12);
                Normal::new(mu, sd).map(|d| d.sample(&mut rng)).unwrap_or(mu)
            })
            .collect()
    };
    Ok(InfluenceVector::new(EstimatorKind::RandomSl, Some(target.id), values))
}

/// Training loss of every instance; larger is inspected first.
pub fn loss_baseline(model: &GbdtModel, dataset: &Dataset) -> Result<InfluenceVector> {
    model.check_trained_on(dataset)?;
    let values = (0..dataset.n_rows())
        .map(|i| model.loss_at(dataset.row(i), dataset.target(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(InfluenceVector::new(EstimatorKind::Loss, None, values))
}
