use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Kind of supervised task; decides which loss is legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    /// Targets are stored as `{0, 1}`.
    Binary,
    /// Targets are class indices `{0..C-1}`.
    Multiclass,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }
}

/// Dense row-major feature matrix plus targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    targets: Vec<f64>,
    task: TaskKind,
    n_classes: usize,
}

impl Dataset {
    /// Builds a dataset, validating shape, finiteness and label legality.
    ///
    /// `n_classes` is ignored for regression (stored as 1) and forced to 2
    /// for binary tasks. For multiclass it must cover every target.
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        targets: Vec<f64>,
        task: TaskKind,
        n_classes: usize,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(invalid("dataset needs at least one feature"));
        }
        if targets.is_empty() {
            return Err(invalid("dataset needs at least one row"));
        }
        if features.len() != targets.len() * n_features {
            return Err(invalid(format!(
                "feature buffer has {} values, expected {} rows x {} features",
                features.len(),
                targets.len(),
                n_features
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite feature value at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        let n_classes = match task {
            TaskKind::Regression => 1,
            TaskKind::Binary => 2,
            TaskKind::Multiclass => n_classes,
        };
        if task == TaskKind::Multiclass && n_classes < 2 {
            return Err(invalid("multiclass dataset needs at least two classes"));
        }
        for (i, &y) in targets.iter().enumerate() {
            if !y.is_finite() {
                return Err(invalid(format!("non-finite target at row {i}")));
            }
            if task.is_classification() && !is_class_index(y, n_classes) {
                return Err(invalid(format!(
                    "target {y} at row {i} is not a class index in 0..{n_classes}"
                )));
            }
        }
        Ok(Self {
            features,
            n_features,
            targets,
            task,
            n_classes,
        })
    }

    pub fn regression(features: Vec<f64>, n_features: usize, targets: Vec<f64>) -> Result<Self> {
        Self::new(features, n_features, targets, TaskKind::Regression, 1)
    }

    pub fn binary(features: Vec<f64>, n_features: usize, targets: Vec<f64>) -> Result<Self> {
        Self::new(features, n_features, targets, TaskKind::Binary, 2)
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Number of raw margins the model produces per instance.
    pub fn n_outputs(&self) -> usize {
        match self.task {
            TaskKind::Multiclass => self.n_classes,
            _ => 1,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features + j]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("subset must keep at least one row"));
        }
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_rows() {
                return Err(invalid(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Ok(Self {
            features,
            n_features: self.n_features,
            targets,
            task: self.task,
            n_classes: self.n_classes,
        })
    }

    /// Copy with some targets replaced.
    pub fn with_targets(&self, overrides: &[(usize, f64)]) -> Result<Self> {
        let mut out = self.clone();
        for &(i, y) in overrides {
            if i >= out.n_rows() {
                return Err(invalid(format!("row index {i} out of range")));
            }
            if !y.is_finite() || (self.task.is_classification() && !is_class_index(y, self.n_classes)) {
                return Err(invalid(format!("illegal replacement target {y}")));
            }
            out.targets[i] = y;
        }
        Ok(out)
    }

    pub fn mean_target(&self) -> f64 {
        self.targets.iter().sum::<f64>() / self.n_rows() as f64
    }

    pub(crate) fn hash_into(&self, hasher: &mut Sha256) {
        hasher.update(format!("{:?}|{}|{}|{}", self.task, self.n_classes, self.n_features, self.n_rows()).as_bytes());
        for v in &self.features {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for v in &self.targets {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
}

fn is_class_index(y: f64, n_classes: usize) -> bool {
    y >= 0.0 && y.fract() == 0.0 && (y as usize) < n_classes
}
