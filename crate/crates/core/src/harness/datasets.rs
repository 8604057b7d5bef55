//! Dataset sources an experiment can name.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::synth::{generate, SynthSpec};
use crate::data_io::{encode, fit_encoding, encode_with, load_csv, load_schema, read_csv};
use crate::error::{invalid, Result};
use crate::gbdt::{Dataset, TaskKind};

/// CSVs compiled into the crate.
pub const BUNDLED: [(&str, &str); 5] = [
    ("stump", include_str!("../../data/stump.csv")),
    ("diabetes", include_str!("../../data/diabetes.csv")),
    ("breast_cancer", include_str!("../../data/breast_cancer.csv")),
    ("iris", include_str!("../../data/iris.csv")),
    ("wine", include_str!("../../data/wine.csv")),
];

pub fn bundled_csv(name: &str) -> Result<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
            invalid(format!("unknown bundled dataset `{name}`; available: {}", names.join(", ")))
        })
}

pub fn bundled(name: &str) -> Result<Dataset> {
    let raw = read_csv(bundled_csv(name)?.as_bytes(), None, Some("target"))?;
    Ok(encode(&raw)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Bundled(String),
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: Option<PathBuf>,
        #[serde(default)]
        target: Option<String>,
        #[serde(default)]
        task: Option<TaskKind>,
    },
    Synth(SynthSpec),
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Bundled(n) => n.clone(),
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
            DatasetSource::Synth(s) => format!("{}_n{}_s{}", s.generator.name(), s.n, s.seed),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Bundled(n) => bundled(n),
            DatasetSource::Csv {
                path,
                schema,
                target,
                task,
            } => {
                let schema = schema.as_deref().map(load_schema).transpose()?;
                let raw = load_csv(path, schema.as_ref(), target.as_deref())?;
                let meta = fit_encoding(&raw, *task)?;
                encode_with(&raw, &meta)
            }
            DatasetSource::Synth(s) => Ok(generate(s)?.dataset),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_datasets_load() {
        let s = bundled("stump").unwrap();
        assert_eq!((s.n_rows(), s.task()), (2, TaskKind::Regression));
        let d = bundled("diabetes").unwrap();
        assert_eq!((d.n_rows(), d.n_features(), d.task()), (442, 10, TaskKind::Regression));
        let b = bundled("breast_cancer").unwrap();
        assert_eq!((b.n_rows(), b.task()), (569, TaskKind::Binary));
        let i = bundled("iris").unwrap();
        assert_eq!((i.n_rows(), i.n_classes()), (150, 3));
        assert!(bundled("nope").is_err());
    }
}
