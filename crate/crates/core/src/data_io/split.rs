//! Seeded train/test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gbdt::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub rng_seed: u64,
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            rng_seed: 0,
            stratify: false,
        }
    }
}

/// Row indices of each side, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(dataset: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    let n = dataset.n_rows();
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(invalid("train_fraction must lie in (0, 1)"));
    }
    if n < 5 {
        return Err(invalid(format!("need at least 5 rows to split, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let groups: Vec<Vec<usize>> = if spec.stratify && dataset.task().is_classification() {
        let mut g = vec![Vec::new(); dataset.n_classes()];
        for i in 0..n {
            g[dataset.target(i) as usize].push(i);
        }
        g
    } else {
        vec![(0..n).collect()]
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let k = (spec.train_fraction * group.len() as f64).round() as usize;
        train.extend_from_slice(&group[..k]);
        test.extend_from_slice(&group[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(invalid("split leaves the train or test side empty"));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// `(train, test)` datasets.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(dataset, spec)?;
    Ok((dataset.subset(&idx.train)?, dataset.subset(&idx.test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        Dataset::binary(x, 1, y).unwrap()
    }

    #[test]
    fn eight_two_split_is_a_partition() {
        let ds = binary(10);
        let s = split_indices(&ds, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s, split_indices(&ds, &SplitSpec::default()).unwrap());
    }

    #[test]
    fn stratified_keeps_proportions() {
        let ds = binary(100);
        let spec = SplitSpec {
            stratify: true,
            rng_seed: 3,
            ..SplitSpec::default()
        };
        let s = split_indices(&ds, &spec).unwrap();
        let pos = s.train.iter().filter(|&&i| ds.target(i) == 1.0).count();
        assert!((39..=41).contains(&pos), "{pos}");
        assert!(split_indices(&binary(4), &spec).is_err());
    }
}
