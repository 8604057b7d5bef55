//! Rank aggregation, correlation, affinity and runtime analyses.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{MetricCurve, RankContext, RankingEntry, RankingTable};
use super::stats::{average_ranks, ci95, mean, median, pearson, spearman};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{Dataset, GbdtModel};
use crate::influence::{EstimatorKind, EstimatorOptions, Explainer, InfluenceVector, Retrainer, Target};

/// Per (dataset, model config, checkpoint index): each estimator's sum of
/// values over seeds and the number of seeds.
type Cells = BTreeMap<(String, String, usize), Vec<(f64, usize)>>;

fn collect_cells<'a>(curves: &[&'a MetricCurve], estimators: &[String]) -> Result<(Cells, BTreeMap<(&'a str, &'a str), &'a [f64]>)> {
    let mut grids: BTreeMap<(&str, &str), &[f64]> = BTreeMap::new();
    let mut cells: Cells = BTreeMap::new();
    for c in curves {
        if c.values.len() != c.checkpoints.len() {
            return Err(invalid("curve has a different number of values and checkpoints"));
        }
        let grid = grids.entry((&c.dataset, &c.model_config)).or_insert(&c.checkpoints);
        if *grid != c.checkpoints.as_slice() {
            return Err(invalid(format!(
                "checkpoint grids differ within {} / {}",
                c.dataset, c.model_config
            )));
        }
        let Some(e) = estimators.iter().position(|n| *n == c.estimator) else {
            continue;
        };
        for (j, (&cp, &v)) in c.checkpoints.iter().zip(&c.values).enumerate() {
            if cp <= 0.0 {
                continue;
            }
            let cell = cells
                .entry((c.dataset.clone(), c.model_config.clone(), j))
                .or_insert_with(|| vec![(0.0, 0); estimators.len()]);
            cell[e].0 += v;
            cell[e].1 += 1;
        }
    }
    Ok((cells, grids))
}

/// Seed-averaged values of every complete context, grouped by dataset.
fn context_means(cells: &Cells) -> BTreeMap<String, Vec<Vec<f64>>> {
    let mut means: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for ((dataset, _, _), cell) in cells {
        if cell.iter().all(|&(_, k)| k > 0) {
            means
                .entry(dataset.clone())
                .or_default()
                .push(cell.iter().map(|&(s, k)| s / k as f64).collect());
        }
    }
    means
}

/// Ranks estimators per (dataset, model config, checkpoint) context on
/// `metric`, larger being better, and aggregates over contexts.  Relative
/// magnitude compares `magnitude_metric` against Random.
///
/// Seeds are averaged within a context. The 0 baseline checkpoint is left
/// out. Contexts missing any estimator are skipped.
pub fn rank_aggregate(curves: &[MetricCurve], metric: &str, magnitude_metric: &str) -> Result<RankingTable> {
    let magnitude: Vec<&MetricCurve> = curves.iter().filter(|c| c.metric == magnitude_metric).collect();
    let curves: Vec<&MetricCurve> = curves.iter().filter(|c| c.metric == metric).collect();
    let estimators: Vec<String> = curves
        .iter()
        .map(|c| c.estimator.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (cells, grids) = collect_cells(&curves, &estimators)?;
    let means = context_means(&collect_cells(&magnitude, &estimators)?.0);

    let mut contexts = Vec::new();
    let mut per_dataset: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for ((dataset, config, j), cell) in &cells {
        if cell.iter().any(|&(_, k)| k == 0) {
            continue;
        }
        let values: Vec<f64> = cell.iter().map(|&(s, k)| s / k as f64).collect();
        let negated: Vec<f64> = values.iter().map(|v| -v).collect();
        let ranks = average_ranks(&negated);
        per_dataset.entry(dataset.clone()).or_default().push(ranks.clone());
        contexts.push(RankContext {
            dataset: dataset.clone(),
            model_config: config.clone(),
            checkpoint: grids[&(dataset.as_str(), config.as_str())][*j],
            ranks,
        });
    }

    let random = estimators.iter().position(|e| e == EstimatorKind::Random.name());
    let entries = estimators
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let dataset_ranks: Vec<f64> = per_dataset
                .values()
                .map(|rows| mean(&rows.iter().map(|r| r[e]).collect::<Vec<_>>()))
                .collect();
            let mut logs = Vec::new();
            let mut excluded = 0;
            if let Some(r) = random {
                for rows in means.values() {
                    let mine = mean(&rows.iter().map(|v| v[e]).collect::<Vec<_>>());
                    let theirs = mean(&rows.iter().map(|v| v[r]).collect::<Vec<_>>());
                    if mine > 0.0 && theirs > 0.0 {
                        logs.push((mine / theirs).ln());
                    } else {
                        excluded += 1;
                    }
                }
            }
            RankingEntry {
                estimator: name.clone(),
                mean_rank: (!dataset_ranks.is_empty()).then(|| mean(&dataset_ranks)),
                rank_ci95: ci95(&dataset_ranks),
                relative_magnitude: (!logs.is_empty()).then(|| mean(&logs).exp()),
                magnitude_excluded: excluded,
            }
        })
        .collect();
    Ok(RankingTable {
        metric: metric.to_string(),
        magnitude_metric: magnitude_metric.to_string(),
        entries,
        contexts,
    })
}

/// Pairwise correlations between estimators, averaged over targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub estimators: Vec<String>,
    pub target_ids: Vec<Option<usize>>,
    /// `None` where no target gave a defined coefficient.
    pub spearman: Vec<Vec<Option<f64>>>,
    pub pearson: Vec<Vec<Option<f64>>>,
    /// Targets left out of each average because a coefficient was undefined.
    pub spearman_undefined: Vec<Vec<usize>>,
    pub pearson_undefined: Vec<Vec<usize>>,
}

impl CorrelationReport {
    pub fn index(&self, estimator: &str) -> Option<usize> {
        self.estimators.iter().position(|e| e == estimator)
    }

    pub fn spearman_between(&self, a: &str, b: &str) -> Option<f64> {
        self.spearman[self.index(a)?][self.index(b)?]
    }
}

/// Correlates every pair of estimators over matching targets.  Each entry
/// holds one estimator's vectors, keyed by target id.
pub fn correlation_matrix(sets: &[(String, Vec<InfluenceVector>)]) -> Result<CorrelationReport> {
    if sets.is_empty() {
        return Err(invalid("no influence vectors to correlate"));
    }
    let mut aligned: Vec<Vec<&InfluenceVector>> = Vec::with_capacity(sets.len());
    let mut ids: Option<Vec<Option<usize>>> = None;
    for (name, vectors) in sets {
        let mut v: Vec<&InfluenceVector> = vectors.iter().collect();
        v.sort_by_key(|x| x.target_id);
        let these: Vec<Option<usize>> = v.iter().map(|x| x.target_id).collect();
        match &ids {
            None => ids = Some(these),
            Some(expected) if *expected != these => {
                return Err(invalid(format!("`{name}` covers different targets than `{}`", sets[0].0)))
            }
            _ => {}
        }
        aligned.push(v);
    }
    let target_ids = ids.unwrap_or_default();
    let k = sets.len();
    let mut report = CorrelationReport {
        estimators: sets.iter().map(|(n, _)| n.clone()).collect(),
        target_ids,
        spearman: vec![vec![None; k]; k],
        pearson: vec![vec![None; k]; k],
        spearman_undefined: vec![vec![0; k]; k],
        pearson_undefined: vec![vec![0; k]; k],
    };
    for a in 0..k {
        report.spearman[a][a] = Some(1.0);
        report.pearson[a][a] = Some(1.0);
        for b in a + 1..k {
            let mut s = Vec::new();
            let mut p = Vec::new();
            for (va, vb) in aligned[a].iter().zip(&aligned[b]) {
                if va.len() != vb.len() {
                    return Err(invalid("influence vectors differ in length"));
                }
                match spearman(&va.values, &vb.values) {
                    Some(x) => s.push(x),
                    None => report.spearman_undefined[a][b] += 1,
                }
                match pearson(&va.values, &vb.values) {
                    Some(x) => p.push(x),
                    None => report.pearson_undefined[a][b] += 1,
                }
            }
            let sm = (!s.is_empty()).then(|| mean(&s));
            let pm = (!p.is_empty()).then(|| mean(&p));
            report.spearman[a][b] = sm;
            report.spearman[b][a] = sm;
            report.pearson[a][b] = pm;
            report.pearson[b][a] = pm;
            report.spearman_undefined[b][a] = report.spearman_undefined[a][b];
            report.pearson_undefined[b][a] = report.pearson_undefined[a][b];
        }
    }
    Ok(report)
}

/// Per training row, the number of trees routing it to the target's leaf.
pub fn affinity_counts(model: &GbdtModel, dataset: &Dataset, x: &[f64]) -> Result<Vec<usize>> {
    if x.len() != model.n_features || dataset.n_features() != model.n_features {
        return Err(invalid("feature count does not match the model"));
    }
    let mut counts = vec![0usize; dataset.n_rows()];
    for tree in model.trees.iter().flatten() {
        let leaf = tree.leaf_index(x);
        for (i, c) in counts.iter_mut().enumerate() {
            if tree.leaf_index(dataset.row(i)) == leaf {
                *c += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityReport {
    pub target_id: usize,
    pub n_trees: usize,
    pub counts: Vec<usize>,
    /// `histogram[c]` rows share the target's leaf in exactly `c` trees.
    pub histogram: Vec<usize>,
}

pub fn affinity_histogram(model: &GbdtModel, dataset: &Dataset, target: &Target) -> Result<AffinityReport> {
    let counts = affinity_counts(model, dataset, &target.x)?;
    let n_trees = model.trees.iter().map(Vec::len).sum();
    let mut histogram = vec![0usize; n_trees + 1];
    for &c in &counts {
        histogram[c] += 1;
    }
    Ok(AffinityReport {
        target_id: target.id,
        n_trees,
        counts,
        histogram,
    })
}

/// Change in affinity for the rows a retrained model kept.  `kept[j]` is
/// the row of `dataset` at position `j` of the retrained model's data.
pub fn affinity_delta(before: &GbdtModel, after: &GbdtModel, dataset: &Dataset, kept: &[usize], x: &[f64]) -> Result<Vec<i64>> {
    let old = affinity_counts(before, dataset, x)?;
    let new = affinity_counts(after, &dataset.subset(kept)?, x)?;
    Ok(kept
        .iter()
        .zip(&new)
        .map(|(&i, &c)| c as i64 - old[i] as i64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub samples: Vec<f64>,
}

impl TimingSummary {
    fn new(samples: Vec<f64>) -> Self {
        Self {
            median: median(&samples),
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub estimator: String,
    /// Seconds.
    pub fit: TimingSummary,
    /// Seconds to score every training row for one target.
    pub influence: TimingSummary,
    pub total_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_train: usize,
    pub n_features: usize,
    pub n_trees: usize,
    pub repeats: usize,
    pub target_id: usize,
    pub entries: Vec<BenchEntry>,
}

/// Times fitting and one-target influence for each estimator on a single
/// worker thread.  The model is trained before timing starts.
pub fn runtime_bench(
    estimators: &[EstimatorKind],
    retrainer: &Retrainer,
    model: Arc<GbdtModel>,
    target: &Target,
    repeats: usize,
    options: &EstimatorOptions,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(invalid("repeats must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot build benchmark pool: {e}")))?;
    let entries = pool.install(|| -> Result<Vec<BenchEntry>> {
        estimators
            .iter()
            .map(|&kind| {
                let mut fit = Vec::with_capacity(repeats);
                let mut infl = Vec::with_capacity(repeats);
                for _ in 0..repeats {
                    let start = Instant::now();
                    let ex = Explainer::fit(kind, model.clone(), retrainer, options)?;
                    fit.push(start.elapsed().as_secs_f64());
                    let start = Instant::now();
                    let v = ex.influence(target)?;
                    infl.push(start.elapsed().as_secs_f64());
                    std::hint::black_box(v);
                }
                let totals: Vec<f64> = fit.iter().zip(&infl).map(|(a, b)| a + b).collect();
                Ok(BenchEntry {
                    estimator: kind.name().to_string(),
                    fit: TimingSummary::new(fit),
                    influence: TimingSummary::new(infl),
                    total_median: median(&totals),
                })
            })
            .collect()
    })?;
    Ok(BenchReport {
        n_train: retrainer.n(),
        n_features: model.n_features,
        n_trees: model.n_iterations(),
        repeats,
        target_id: target.id,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(estimator: &str, values: Vec<f64>) -> MetricCurve {
        MetricCurve {
            dataset: "d".into(),
            model_config: "c".into(),
            estimator: estimator.into(),
            seed: 0,
            metric: "delta_loss".into(),
            checkpoints: (0..values.len()).map(|i| i as f64 * 0.1).collect(),
            counts: (0..values.len()).collect(),
            values,
        }
    }

    #[test]
    fn single_estimator_ranks_first() {
        let t = rank_aggregate(&[curve("boostin", vec![0.0, 1.0, 2.0])], "delta_loss", "delta_loss").unwrap();
        assert_eq!(t.entries[0].mean_rank, Some(1.0));
        assert_eq!(t.contexts.len(), 2);
    }

    #[test]
    fn ties_and_random_ratio() {
        let curves = [
            curve("boostin", vec![0.0, 1.0, 2.0]),
            curve("random", vec![0.0, 1.0, 2.0]),
        ];
        let t = rank_aggregate(&curves, "delta_loss", "delta_loss").unwrap();
        for e in &t.entries {
            assert_eq!(e.mean_rank, Some(1.5));
            assert!((e.relative_magnitude.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let mut b = curve("random", vec![0.0, 1.0, 2.0]);
        b.checkpoints[2] = 0.3;
        assert!(rank_aggregate(&[curve("boostin", vec![0.0, 1.0, 2.0]), b], "delta_loss", "delta_loss").is_err());
    }

    #[test]
    fn correlation_diagonal_and_undefined() {
        let a = InfluenceVector::new(EstimatorKind::BoostIn, Some(0), vec![1.0, 2.0, 3.0, 4.0]);
        let b = InfluenceVector::new(EstimatorKind::Random, Some(0), vec![1.0, 1.0, 1.0, 1.0]);
        let r = correlation_matrix(&[("boostin".into(), vec![a]), ("random".into(), vec![b])]).unwrap();
        assert_eq!(r.spearman[0][0], Some(1.0));
        assert_eq!(r.spearman[0][1], None);
        assert_eq!(r.spearman_undefined[1][0], 1);
    }
}
