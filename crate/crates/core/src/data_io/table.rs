//! Raw CSV tables and column kinds.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
    Target,
}

/// Sidecar schema: column name to kind.
pub type Schema = BTreeMap<String, ColumnKind>;

pub fn load_schema(path: &Path) -> Result<Schema> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    /// Row-major string cells.
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn target_column(&self) -> usize {
        self.kinds
            .iter()
            .position(|k| *k == ColumnKind::Target)
            .expect("validated: exactly one target")
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[j].as_str())
    }
}

/// Reads a CSV file; see [`read_csv`].
pub fn load_csv(path: &Path, schema: Option<&Schema>, target: Option<&str>) -> Result<RawTable> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, target)
}

/// Parses a headed CSV.
///
/// Kinds come from `schema` where given and are inferred otherwise. The
/// target is the schema's `target` column, else `target`, else the last
/// column.
pub fn read_csv<R: Read>(reader: R, schema: Option<&Schema>, target: Option<&str>) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let columns: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if columns.iter().any(|c| c.is_empty()) {
        return Err(Error::Schema("empty column name in header".into()));
    }
    let unique: BTreeSet<&String> = columns.iter().collect();
    if unique.len() != columns.len() {
        return Err(Error::Schema("duplicate column names in header".into()));
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != columns.len() {
            return Err(Error::RaggedRow {
                row: r,
                expected: columns.len(),
                found: rec.len(),
            });
        }
        let row: Vec<String> = rec.iter().map(|s| s.trim().to_string()).collect();
        if let Some(j) = row.iter().position(|c| c.is_empty()) {
            return Err(Error::Parse {
                row: r,
                column: columns[j].clone(),
                message: "missing value".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Schema("table has no data rows".into()));
    }

    let empty = Schema::new();
    let schema = schema.unwrap_or(&empty);
    if let Some(extra) = schema.keys().find(|k| !columns.contains(k)) {
        return Err(Error::Schema(format!("schema column `{extra}` is not in the header")));
    }
    let schema_targets: Vec<&String> = schema
        .iter()
        .filter(|(_, k)| **k == ColumnKind::Target)
        .map(|(c, _)| c)
        .collect();
    let target_name = match (schema_targets.as_slice(), target) {
        ([one], None) => (*one).clone(),
        ([one], Some(t)) if *one == t => t.to_string(),
        ([_], Some(t)) => {
            return Err(Error::Schema(format!("schema target differs from requested target `{t}`")));
        }
        ([], Some(t)) => t.to_string(),
        ([], None) => columns.last().expect("non-empty header").clone(),
        _ => return Err(Error::Schema("schema declares more than one target column".into())),
    };
    let target_idx = columns
        .iter()
        .position(|c| *c == target_name)
        .ok_or_else(|| Error::Schema(format!("target column `{target_name}` not found")))?;

    let mut kinds = Vec::with_capacity(columns.len());
    for (j, name) in columns.iter().enumerate() {
        let kind = if j == target_idx {
            ColumnKind::Target
        } else if let Some(k) = schema.get(name) {
            *k
        } else {
            let k = infer_kind(rows.iter().map(|r| r[j].as_str()));
            log::info!("column `{name}` inferred as {k:?}");
            k
        };
        if kind == ColumnKind::Numeric {
            for (r, row) in rows.iter().enumerate() {
                parse_number(&row[j], r, name)?;
            }
        }
        kinds.push(kind);
    }
    Ok(RawTable { columns, kinds, rows })
}

pub(crate) fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{cell}` is not a finite number"),
        }),
    }
}

fn infer_kind<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> ColumnKind {
    if cells.clone().all(|c| c.parse::<f64>().map(f64::is_finite).unwrap_or(false)) {
        return ColumnKind::Numeric;
    }
    let distinct: BTreeSet<&str> = cells.collect();
    if distinct.len() <= 2 {
        ColumnKind::Binary
    } else {
        ColumnKind::Categorical
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_declared_schema() {
        let text = "a,b,c\n1,x,0\n2,y,1\n3,x,0\n";
        let schema: Schema = [("b".to_string(), ColumnKind::Categorical), ("c".to_string(), ColumnKind::Target)]
            .into_iter()
            .collect();
        let t = read_csv(text.as_bytes(), Some(&schema), None).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.kinds, vec![ColumnKind::Numeric, ColumnKind::Categorical, ColumnKind::Target]);
    }

    #[test]
    fn ragged_rows_name_the_row() {
        let err = read_csv("a,b,c\n1,2,3\n4,5\n".as_bytes(), None, None).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 1, expected: 3, found: 2 }), "{err}");
    }

    #[test]
    fn infers_kinds_and_rejects_bad_numbers() {
        let t = read_csv("n,b,c,y\n1,no,a,1\n2,yes,b,2\n3,no,c,3\n".as_bytes(), None, None).unwrap();
        assert_eq!(
            t.kinds,
            vec![ColumnKind::Numeric, ColumnKind::Binary, ColumnKind::Categorical, ColumnKind::Target]
        );
        let schema: Schema = [("n".to_string(), ColumnKind::Numeric)].into_iter().collect();
        let err = read_csv("n,y\n1,0\nx,1\n".as_bytes(), Some(&schema), None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err}");
        assert!(read_csv("n,y\n1,\n".as_bytes(), None, None).is_err());
        assert!(read_csv("n,y\n1,0\n".as_bytes(), None, Some("z")).is_err());
    }
}
