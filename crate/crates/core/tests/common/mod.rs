#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeinf::gbdt::{Dataset, TaskKind, TrainConfig};

pub fn stump() -> Dataset {
    Dataset::regression(vec![0.0, 0.0], 1, vec![0.0, 2.0]).unwrap()
}

pub fn stump_config() -> TrainConfig {
    TrainConfig {
        n_trees: 1,
        max_leaves: Some(2),
        min_leaf_size: 1,
        eta: 1.0,
        lambda: 0.0,
        ..TrainConfig::default()
    }
}

pub fn random_dataset(seed: u64, n: usize, p: usize, task: TaskKind) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let signal = row[0] + 0.5 * row[1 % p] * row[1 % p] - 0.3 * row[p - 1];
        let noise: f64 = rng.random_range(-0.5..0.5);
        y.push(match task {
            TaskKind::Regression => signal + noise,
            TaskKind::Binary => f64::from(signal + noise > 0.3),
            TaskKind::Multiclass => {
                let v = signal + noise;
                if v < -0.3 {
                    0.0
                } else if v < 0.7 {
                    1.0
                } else {
                    2.0
                }
            }
        });
        x.extend(row);
    }
    let classes = match task {
        TaskKind::Regression => 1,
        TaskKind::Binary => 2,
        TaskKind::Multiclass => 3,
    };
    Dataset::new(x, p, y, task, classes).unwrap()
}

pub fn small_config(n_trees: usize, lambda: f64) -> TrainConfig {
    TrainConfig {
        n_trees,
        max_leaves: Some(6),
        min_leaf_size: 3,
        eta: 0.3,
        lambda,
        ..TrainConfig::default()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
