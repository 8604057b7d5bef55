//! Synthetic datasets with known structure.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gbdt::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Binary task with small clusters labelled against their surroundings.
    Planted,
    /// Binary task of label-pure Gaussian clusters with a fraction flipped.
    Flipped,
    /// Friedman #1 regression.
    Friedman,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Planted => "planted",
            Generator::Flipped => "flipped",
            Generator::Friedman => "friedman",
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planted" => Ok(Generator::Planted),
            "flipped" => Ok(Generator::Flipped),
            "friedman" => Ok(Generator::Friedman),
            _ => Err(invalid(format!("unknown generator `{s}`; valid generators: planted, flipped, friedman"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub generator: Generator,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Label flip rate for `flipped`.
    #[serde(default = "default_flip")]
    pub flip_fraction: f64,
}

fn default_flip() -> f64 {
    0.1
}

/// Generated data plus the rows whose labels were planted or flipped.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub marked: Vec<usize>,
}

pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    if spec.n < 10 {
        return Err(invalid("synthetic datasets need n >= 10"));
    }
    match spec.generator {
        Generator::Planted => planted(spec.n, spec.seed),
        Generator::Flipped => flipped(spec.n, spec.seed, spec.flip_fraction),
        Generator::Friedman => friedman(spec.n, spec.seed),
    }
}

const PLANTED_P: usize = 6;

/// Background labels follow a noisy linear rule; 8% of rows sit in four
/// tight clusters whose label is opposite to the rule there.
pub fn planted(n: usize, seed: u64) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: [[f64; 2]; 4] = [[1.2, 1.2], [-1.2, -1.2], [1.5, -0.4], [-0.4, 1.5]];
    let n_planted = ((0.08 * n as f64).round() as usize).max(4);
    let noise = Normal::new(0.0, 0.12).expect("valid sd");
    let mut x = Vec::with_capacity(n * PLANTED_P);
    let mut y = Vec::with_capacity(n);
    let mut marked = Vec::new();
    let rule = |r: &[f64]| r[0] + r[1] - 0.5 * r[2] > 0.0;
    for i in 0..n {
        let mut row: Vec<f64> = (0..PLANTED_P).map(|_| rng.random_range(-2.0..2.0)).collect();
        if i < n_planted {
            let c = centers[i % centers.len()];
            row[0] = c[0] + noise.sample(&mut rng);
            row[1] = c[1] + noise.sample(&mut rng);
            row[2] = noise.sample(&mut rng);
            y.push(f64::from(!rule(&row)));
            marked.push(i);
        } else {
            let flip = rng.random_bool(0.05);
            y.push(f64::from(rule(&row) ^ flip));
        }
        x.extend(row);
    }
    Ok(Synthetic {
        dataset: Dataset::binary(x, PLANTED_P, y)?,
        marked,
    })
}

const FLIPPED_P: usize = 4;

/// Six well-separated clusters with pure labels, then `flip_fraction` of
/// the rows flipped.
pub fn flipped(n: usize, seed: u64, flip_fraction: f64) -> Result<Synthetic> {
    if !(0.0..1.0).contains(&flip_fraction) {
        return Err(invalid("flip_fraction must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).expect("valid sd");
    let n_clusters = 6;
    let centers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|c| (0..FLIPPED_P).map(|d| if (c + d) % 3 == 0 { 3.0 } else { -3.0 } * (1.0 + c as f64 * 0.1)).collect())
        .collect();
    let mut x = Vec::with_capacity(n * FLIPPED_P);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_clusters;
        x.extend(centers[c].iter().map(|m| m + noise.sample(&mut rng)));
        y.push((c % 2) as f64);
    }
    let k = (flip_fraction * n as f64).round() as usize;
    let mut marked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    marked.sort_unstable();
    for &i in &marked {
        y[i] = 1.0 - y[i];
    }
    Ok(Synthetic {
        dataset: Dataset::binary(x, FLIPPED_P, y)?,
        marked,
    })
}

/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 + N(0, 1)` on ten
/// uniform features.
pub fn friedman(n: usize, seed: u64) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid sd");
    let p = 10;
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        y.push(10.0 * (PI * r[0] * r[1]).sin() + 20.0 * (r[2] - 0.5).powi(2) + 10.0 * r[3] + 5.0 * r[4] + noise.sample(&mut rng));
        x.extend(r);
    }
    Ok(Synthetic {
        dataset: Dataset::regression(x, p, y)?,
        marked: Vec::new(),
    })
}

/// CSV text of a dataset with columns `x0..`, `target`.
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<String> = (0..dataset.n_features()).map(|j| format!("x{j}")).collect();
    out.push_str(&names.join(","));
    out.push_str(",target\n");
    for i in 0..dataset.n_rows() {
        for v in dataset.row(i) {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&dataset.target(i).to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        for g in [Generator::Planted, Generator::Flipped, Generator::Friedman] {
            let spec = SynthSpec {
                generator: g,
                n: 200,
                seed: 4,
                flip_fraction: 0.1,
            };
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            assert_eq!(a.dataset, b.dataset);
            assert_eq!(a.dataset.n_rows(), 200);
        }
        let f = flipped(100, 1, 0.1).unwrap();
        assert_eq!(f.marked.len(), 10);
        for &i in &f.marked {
            assert_ne!(f.dataset.target(i), ((i % 6) % 2) as f64);
        }
    }
}
