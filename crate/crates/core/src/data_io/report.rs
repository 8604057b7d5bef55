//! Report files: JSON documents, curve CSVs and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;
use crate::harness::{ExperimentReport, MetricCurve};

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `checkpoint_fraction,estimator,seed,metric,value`, one row per point.
pub fn write_curves_csv<'a, W: Write>(out: W, curves: impl IntoIterator<Item = &'a MetricCurve>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["checkpoint_fraction", "estimator", "seed", "metric", "value"])?;
    for c in curves {
        let seed = c.seed.to_string();
        for (cp, v) in c.checkpoints.iter().zip(&c.values) {
            w.write_record([&cp.to_string(), &c.estimator, &seed, &c.metric, &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated table of seed-averaged values: a checkpoint column
/// followed by one column per estimator.
pub fn write_plot_data<W: Write>(mut out: W, curves: &[&MetricCurve]) -> Result<()> {
    let mut by_estimator: BTreeMap<&str, Vec<&MetricCurve>> = BTreeMap::new();
    for c in curves {
        by_estimator.entry(&c.estimator).or_default().push(c);
    }
    let Some(first) = curves.first() else {
        return Ok(());
    };
    write!(out, "# checkpoint")?;
    for name in by_estimator.keys() {
        write!(out, " {name}")?;
    }
    writeln!(out)?;
    for (j, cp) in first.checkpoints.iter().enumerate() {
        write!(out, "{cp}")?;
        for group in by_estimator.values() {
            let vals: Vec<f64> = group.iter().filter_map(|c| c.values.get(j).copied()).collect();
            let m = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
            write!(out, " {m}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| {
            p.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("__")
}

/// Writes `summary.json`, one curve CSV per (dataset, model config) and one
/// `.dat` plot file per (dataset, model config, metric).  Returns the paths.
pub fn write_report_dir(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.json");
    save_json(report, &summary)?;
    written.push(summary);

    let mut groups: BTreeMap<(&str, &str), Vec<&MetricCurve>> = BTreeMap::new();
    for c in &report.curves {
        groups.entry((&c.dataset, &c.model_config)).or_default().push(c);
    }
    for ((dataset, config), curves) in &groups {
        let path = dir.join(format!("{}.csv", file_stem(&[dataset, config])));
        write_curves_csv(fs::File::create(&path)?, curves.iter().copied())?;
        written.push(path);
        let mut by_metric: BTreeMap<&str, Vec<&MetricCurve>> = BTreeMap::new();
        for c in curves {
            by_metric.entry(&c.metric).or_default().push(c);
        }
        for (metric, group) in by_metric {
            let path = dir.join(format!("{}.dat", file_stem(&[dataset, config, metric])));
            write_plot_data(fs::File::create(&path)?, &group)?;
            written.push(path);
        }
    }
    Ok(written)
}
