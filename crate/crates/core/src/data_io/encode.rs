//! Table to dataset encoding.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::table::{parse_number, ColumnKind, RawTable};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{Dataset, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub name: String,
    pub kind: ColumnKind,
    /// Category order for one-hot columns and non-numeric binary columns.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEncoding {
    pub name: String,
    pub task: TaskKind,
    /// Label text of each class index; empty for regression.
    pub classes: Vec<String>,
}

/// Everything needed to encode new rows exactly like the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMeta {
    pub columns: Vec<ColumnEncoding>,
    pub target: TargetEncoding,
    pub feature_names: Vec<String>,
}

fn numeric_column(raw: &RawTable, j: usize) -> bool {
    raw.column(j).all(|c| c.parse::<f64>().map(f64::is_finite).unwrap_or(false))
}

fn sorted_labels(raw: &RawTable, j: usize, numeric: bool) -> Vec<String> {
    let set: BTreeSet<&str> = raw.column(j).collect();
    let mut v: Vec<String> = set.into_iter().map(str::to_string).collect();
    if numeric {
        v.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
        v.dedup_by(|a, b| a.parse::<f64>().unwrap() == b.parse::<f64>().unwrap());
    }
    v
}

/// Derives the encoding from a table; `task` overrides target inference.
pub fn fit_encoding(raw: &RawTable, task: Option<TaskKind>) -> Result<EncodingMeta> {
    let tj = raw.target_column();
    let mut columns = Vec::new();
    let mut feature_names = Vec::new();
    for (j, (name, &kind)) in raw.columns.iter().zip(&raw.kinds).enumerate() {
        if j == tj {
            continue;
        }
        let categories = match kind {
            ColumnKind::Numeric => Vec::new(),
            ColumnKind::Binary if numeric_column(raw, j) => Vec::new(),
            ColumnKind::Binary | ColumnKind::Categorical => sorted_labels(raw, j, false),
            ColumnKind::Target => unreachable!("single target"),
        };
        if kind == ColumnKind::Binary && categories.len() > 2 {
            return Err(Error::Schema(format!("binary column `{name}` has {} values", categories.len())));
        }
        match kind {
            ColumnKind::Categorical => {
                feature_names.extend(categories.iter().map(|c| format!("{name}={c}")));
            }
            _ => feature_names.push(name.clone()),
        }
        columns.push(ColumnEncoding {
            name: name.clone(),
            kind,
            categories,
        });
    }
    if feature_names.is_empty() {
        return Err(Error::Schema("table has no feature columns".into()));
    }

    let numeric = numeric_column(raw, tj);
    let labels = sorted_labels(raw, tj, numeric);
    let task = match task {
        Some(t) => t,
        None if numeric && labels.iter().all(|l| matches!(l.parse::<f64>(), Ok(v) if v == 0.0 || v == 1.0)) => {
            TaskKind::Binary
        }
        None if numeric => TaskKind::Regression,
        None if labels.len() <= 2 => TaskKind::Binary,
        None => TaskKind::Multiclass,
    };
    let classes = match task {
        TaskKind::Regression => {
            if !numeric {
                return Err(invalid("regression target must be numeric"));
            }
            Vec::new()
        }
        TaskKind::Binary => {
            if labels.len() > 2 {
                return Err(invalid(format!("binary target has {} distinct labels", labels.len())));
            }
            if numeric && labels.iter().all(|l| matches!(l.parse::<f64>(), Ok(v) if v == 0.0 || v == 1.0)) {
                vec!["0".to_string(), "1".to_string()]
            } else {
                labels
            }
        }
        TaskKind::Multiclass => labels,
    };
    log::info!("target `{}` encoded as {task:?} with classes {classes:?}", raw.columns[tj]);
    Ok(EncodingMeta {
        columns,
        target: TargetEncoding {
            name: raw.columns[tj].clone(),
            task,
            classes,
        },
        feature_names,
    })
}

/// One-hot categoricals (lexicographic), binary text to 0/1, numerics as is.
pub fn encode(raw: &RawTable) -> Result<(Dataset, EncodingMeta)> {
    let meta = fit_encoding(raw, None)?;
    let ds = encode_with(raw, &meta)?;
    Ok((ds, meta))
}

/// Encodes `raw` with an existing layout. Unseen categories become all
/// zeros; unseen target classes are an error.
pub fn encode_with(raw: &RawTable, meta: &EncodingMeta) -> Result<Dataset> {
    let tj = raw.target_column();
    let mut col_idx = Vec::with_capacity(meta.columns.len());
    for c in &meta.columns {
        let j = raw
            .columns
            .iter()
            .position(|n| *n == c.name)
            .ok_or_else(|| Error::Schema(format!("column `{}` missing", c.name)))?;
        col_idx.push(j);
    }
    if raw.columns[tj] != meta.target.name {
        return Err(Error::Schema(format!("target column must be `{}`", meta.target.name)));
    }
    let p = meta.feature_names.len();
    let mut features = Vec::with_capacity(raw.n_rows() * p);
    let mut targets = Vec::with_capacity(raw.n_rows());
    for (r, row) in raw.rows.iter().enumerate() {
        for (c, &j) in meta.columns.iter().zip(&col_idx) {
            let cell = row[j].as_str();
            match c.kind {
                ColumnKind::Categorical => {
                    features.extend(c.categories.iter().map(|cat| f64::from(cat == cell)));
                }
                ColumnKind::Binary if !c.categories.is_empty() => {
                    let v = c.categories.iter().position(|cat| cat == cell).ok_or_else(|| Error::Parse {
                        row: r,
                        column: c.name.clone(),
                        message: format!("unknown binary value `{cell}`"),
                    })?;
                    features.push(v as f64);
                }
                _ => features.push(parse_number(cell, r, &c.name)?),
            }
        }
        let cell = row[tj].as_str();
        let y = match meta.target.task {
            TaskKind::Regression => parse_number(cell, r, &meta.target.name)?,
            _ => {
                let idx = meta
                    .target
                    .classes
                    .iter()
                    .position(|c| c == cell || matches!((c.parse::<f64>(), cell.parse::<f64>()), (Ok(a), Ok(b)) if a == b));
                idx.ok_or_else(|| Error::Parse {
                    row: r,
                    column: meta.target.name.clone(),
                    message: format!("unknown class `{cell}`"),
                })? as f64
            }
        };
        targets.push(y);
    }
    let n_classes = meta.target.classes.len().max(1);
    Dataset::new(features, p, targets, meta.target.task, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::table::{read_csv, Schema};

    #[test]
    fn one_hot_in_lexicographic_order() {
        let schema: Schema = [("c".to_string(), ColumnKind::Categorical)].into_iter().collect();
        let raw = read_csv("c,y\nb,1.5\na,2\nb,3\n".as_bytes(), Some(&schema), None).unwrap();
        let (ds, meta) = encode(&raw).unwrap();
        assert_eq!(meta.feature_names, vec!["c=a", "c=b"]);
        assert_eq!(ds.row(1), &[1.0, 0.0]);
        assert_eq!(ds.row(0), &[0.0, 1.0]);
        assert_eq!(ds.task(), TaskKind::Regression);
        let unseen = read_csv("c,y\nz,1\n".as_bytes(), Some(&schema), None).unwrap();
        assert_eq!(encode_with(&unseen, &meta).unwrap().row(0), &[0.0, 0.0]);
    }

    #[test]
    fn numeric_tables_pass_through() {
        let raw = read_csv("a,b,y\n1.5,2,0.5\n-3,4e1,7\n".as_bytes(), None, None).unwrap();
        let (ds, _) = encode(&raw).unwrap();
        assert_eq!(ds.features(), &[1.5, 2.0, -3.0, 40.0]);
        assert_eq!(ds.targets(), &[0.5, 7.0]);
    }

    #[test]
    fn text_binary_target_maps_yes_to_one() {
        let raw = read_csv("a,y\n1,yes\n2,no\n3,yes\n".as_bytes(), None, None).unwrap();
        let (ds, meta) = encode(&raw).unwrap();
        assert_eq!(ds.task(), TaskKind::Binary);
        assert_eq!(meta.target.classes, vec!["no", "yes"]);
        assert_eq!(ds.targets(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn multiclass_and_numeric_binary_targets() {
        let raw = read_csv("a,y\n1,c\n2,a\n3,b\n".as_bytes(), None, None).unwrap();
        let (ds, _) = encode(&raw).unwrap();
        assert_eq!(ds.task(), TaskKind::Multiclass);
        assert_eq!(ds.targets(), &[2.0, 0.0, 1.0]);
        let raw = read_csv("a,y\n1,1\n2,0\n".as_bytes(), None, None).unwrap();
        let (ds, meta) = encode(&raw).unwrap();
        assert_eq!(ds.task(), TaskKind::Binary);
        assert_eq!(meta.target.classes, vec!["0", "1"]);
        assert_eq!(ds.targets(), &[1.0, 0.0]);
    }
}
