//! Rank statistics and prediction metrics.

use serde::{Deserialize, Serialize};

use crate::gbdt::{Dataset, GbdtModel, TaskKind};

/// 1-based ranks of `values` in ascending order; ties share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation, `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn distinct_at_least(v: &[f64], k: usize) -> bool {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.len() >= k
}

/// Spearman correlation with average-rank ties; `None` unless both sides
/// have at least three distinct values.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if !distinct_at_least(a, 3) || !distinct_at_least(b, 3) {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Area under the ROC curve from scores; `None` with a single class.
pub fn auc(labels: &[f64], scores: &[f64]) -> Option<f64> {
    let ranks = average_ranks(scores);
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let rank_sum: f64 = labels.iter().zip(&ranks).filter(|(y, _)| **y == 1.0).map(|(_, r)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Half-width of a normal 95% interval for the mean; `None` below 2 samples.
pub fn ci95(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    Some(1.96 * (var / v.len() as f64).sqrt())
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Held-out predictive metric, chosen per task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveMetric {
    Accuracy,
    Auc,
    Mse,
}

impl PredictiveMetric {
    pub fn name(self) -> &'static str {
        match self {
            PredictiveMetric::Accuracy => "accuracy",
            PredictiveMetric::Auc => "auc",
            PredictiveMetric::Mse => "mse",
        }
    }

    /// AUC for binary data with at most 20% positives, accuracy for other
    /// classification, MSE for regression.
    pub fn for_dataset(train: &Dataset, eval: &Dataset) -> Self {
        match train.task() {
            TaskKind::Regression => PredictiveMetric::Mse,
            TaskKind::Multiclass => PredictiveMetric::Accuracy,
            TaskKind::Binary => {
                let both = eval.targets().contains(&0.0) && eval.targets().contains(&1.0);
                if train.mean_target() <= 0.2 && both {
                    PredictiveMetric::Auc
                } else {
                    PredictiveMetric::Accuracy
                }
            }
        }
    }
}

/// Mean loss and the predictive metric of `model` on `data`.
pub fn evaluate(model: &GbdtModel, data: &Dataset, metric: PredictiveMetric) -> (f64, f64) {
    let n = data.n_rows();
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut sq = 0.0;
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let raw = model.predict_raw_unchecked(data.row(i));
        let y = data.target(i);
        loss += model.loss.value_unchecked(y, &raw);
        let label = crate::gbdt::model::label_from_raw(model.loss, &raw);
        if label == y {
            correct += 1;
        }
        sq += (raw[0] - y).powi(2);
        scores.push(raw[0]);
    }
    let value = match metric {
        PredictiveMetric::Accuracy => correct as f64 / n as f64,
        PredictiveMetric::Mse => sq / n as f64,
        PredictiveMetric::Auc => auc(data.targets(), &scores).unwrap_or(0.5),
    };
    (loss / n as f64, value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn correlation_cases() {
        let v = [0.3, -1.0, 2.0, 5.0, 0.0];
        assert!((spearman(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((spearman(&v, &rev).unwrap() + 1.0).abs() < 1e-12);
        let twice: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!((pearson(&v, &twice).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&v, &twice).unwrap() - 1.0).abs() < 1e-12);
        assert!(spearman(&v, &[1.0, 1.0, 2.0, 2.0, 1.0]).is_none());
        assert!(pearson(&v, &[4.0; 5]).is_none());
    }

    #[test]
    fn auc_matches_pair_counting() {
        let y = [0.0, 1.0, 1.0, 0.0, 1.0];
        let s = [0.1, 0.9, 0.4, 0.4, 0.3];
        let mut good = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if y[i] == 1.0 && y[j] == 0.0 {
                    good += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&y, &s).unwrap() - good / 6.0).abs() < 1e-12);
        assert!(auc(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn slope_and_summaries() {
        let x = [1.0, 2.0, 4.0];
        let y = [3.0, 12.0, 48.0];
        assert!((log_log_slope(&x, &y) - 2.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(ci95(&[1.0]).is_none());
    }
}
