//! SubSample: marginal influence over models trained on random subsets.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EstimatorKind, InfluenceVector, Retrainer, Target};
use crate::error::{invalid, Result};
use crate::gbdt::GbdtModel;

const MAX_EXHAUSTIVE: u128 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubSampleConfig {
    pub tau: usize,
    /// Subset size; `None` means `floor(0.7 n)`.
    pub m: Option<usize>,
    pub rng_seed: u64,
    /// Enumerate every size-`m` subset instead of sampling `tau` of them.
    pub exhaustive: bool,
}

impl Default for SubSampleConfig {
    fn default() -> Self {
        Self {
            tau: 4000,
            m: None,
            rng_seed: 0,
            exhaustive: false,
        }
    }
}

impl SubSampleConfig {
    pub fn subset_size(&self, n: usize) -> usize {
        self.m.unwrap_or((0.7 * n as f64).floor() as usize)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let m = self.subset_size(n);
        if m == 0 || m >= n {
            return Err(invalid(format!("subset size m = {m} must satisfy 1 <= m < n = {n}")));
        }
        if !self.exhaustive && self.tau == 0 {
            return Err(invalid("tau must be at least 1"));
        }
        if self.exhaustive && binomial(n, m) > MAX_EXHAUSTIVE {
            return Err(invalid(format!(
                "exhaustive enumeration of C({n}, {m}) subsets exceeds {MAX_EXHAUSTIVE}"
            )));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k) as u128;
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n as u128 - i) / (i + 1);
        if r > MAX_EXHAUSTIVE * 1000 {
            return r;
        }
    }
    r
}

/// Size-`m` subsets of `0..n` in lexicographic order.
pub fn all_subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..m).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..m).rev().find(|&i| cur[i] < n - m + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..m {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

#[derive(Debug)]
pub struct SubSample {
    n: usize,
    subsets: Vec<Vec<usize>>,
    models: Vec<Arc<GbdtModel>>,
}

impl SubSample {
    pub fn fit(retrainer: &Retrainer, cfg: &SubSampleConfig) -> Result<Self> {
        let n = retrainer.n();
        cfg.validate(n)?;
        let m = cfg.subset_size(n);
        let subsets = if cfg.exhaustive {
            all_subsets(n, m)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            (0..cfg.tau)
                .map(|_| {
                    let mut s = rand::seq::index::sample(&mut rng, n, m).into_vec();
                    s.sort_unstable();
                    s
                })
                .collect()
        };
        let models = subsets
            .par_iter()
            .map(|s| retrainer.compact_on(s, &[]))
            .collect::<Result<Vec<_>>>()?;
        let est = Self { n, subsets, models };
        let (inc, exc) = est.pool_sizes();
        let empty = inc.iter().zip(&exc).filter(|(a, b)| **a == 0 || **b == 0).count();
        if empty > 0 {
            log::warn!("subsample: {empty} instances lack an include or exclude pool; their influence is 0");
        }
        Ok(est)
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    fn pool_sizes(&self) -> (Vec<usize>, Vec<usize>) {
        let mut inc = vec![0usize; self.n];
        for s in &self.subsets {
            for &i in s {
                inc[i] += 1;
            }
        }
        let exc = inc.iter().map(|c| self.subsets.len() - c).collect();
        (inc, exc)
    }

    /// Mean target loss without `z_i` minus mean target loss with it.
    pub fn influence(&self, target: &Target) -> Result<InfluenceVector> {
        let losses = self
            .models
            .iter()
            .map(|m| m.loss_at(&target.x, target.y))
            .collect::<Result<Vec<_>>>()?;
        let mut in_sum = vec![0.0; self.n];
        let mut out_sum = vec![0.0; self.n];
        let mut in_cnt = vec![0usize; self.n];
        let mut member = vec![false; self.n];
        for (s, &l) in self.subsets.iter().zip(&losses) {
            member.iter_mut().for_each(|b| *b = false);
            for &i in s {
                member[i] = true;
            }
            for i in 0..self.n {
                if member[i] {
                    in_sum[i] += l;
                    in_cnt[i] += 1;
                } else {
                    out_sum[i] += l;
                }
            }
        }
        let total = self.subsets.len();
        let values = (0..self.n)
            .map(|i| {
                let inc = in_cnt[i];
                let exc = total - inc;
                if inc == 0 || exc == 0 {
                    0.0
                } else {
                    out_sum[i] / exc as f64 - in_sum[i] / inc as f64
                }
            })
            .collect();
        Ok(InfluenceVector::new(EstimatorKind::SubSample, Some(target.id), values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_lexicographically() {
        let s = all_subsets(4, 2);
        assert_eq!(s, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(all_subsets(8, 4).len(), 70);
        assert_eq!(all_subsets(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(binomial(8, 4), 70);
    }

    #[test]
    fn rejects_bad_configs() {
        let c = SubSampleConfig { m: Some(10), ..Default::default() };
        assert!(c.validate(10).is_err());
        let c = SubSampleConfig { tau: 0, m: Some(3), ..Default::default() };
        assert!(c.validate(10).is_err());
        let c = SubSampleConfig { m: Some(30), exhaustive: true, ..Default::default() };
        assert!(c.validate(60).is_err());
        assert_eq!(SubSampleConfig::default().subset_size(10), 7);
    }
}
