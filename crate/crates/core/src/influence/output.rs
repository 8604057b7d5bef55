//! Influence tables on disk.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EstimatorOptions, InfluenceVector, SignConvention};
use crate::error::{invalid, Result};

/// JSON form of an influence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceDocument {
    pub estimator: super::EstimatorKind,
    pub convention: SignConvention,
    pub model_fingerprint: String,
    pub options: EstimatorOptions,
    pub vectors: Vec<InfluenceVector>,
}

fn sorted(vectors: &[InfluenceVector]) -> Vec<&InfluenceVector> {
    let mut v: Vec<&InfluenceVector> = vectors.iter().collect();
    v.sort_by_key(|x| x.target_id);
    v
}

/// `estimator,target_id,train_id,value`, ordered by target then train id.
pub fn write_csv<W: Write>(out: W, vectors: &[InfluenceVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "target_id", "train_id", "value"])?;
    for v in sorted(vectors) {
        let target = v.target_id.map(|t| t.to_string()).unwrap_or_default();
        for (i, x) in v.values.iter().enumerate() {
            w.write_record([v.estimator.name(), &target, &i.to_string(), &x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(mut out: W, doc: &InfluenceDocument) -> Result<()> {
    let mut doc = doc.clone();
    doc.vectors.sort_by_key(|x| x.target_id);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads either output format back into vectors.
pub fn read_influence(text: &str) -> Result<Vec<InfluenceVector>> {
    if text.trim_start().starts_with('{') {
        let doc: InfluenceDocument = serde_json::from_str(text)?;
        return Ok(doc.vectors);
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out: Vec<InfluenceVector> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(invalid("influence CSV rows need 4 columns"));
        }
        let est: super::EstimatorKind = rec[0].parse()?;
        let target = if rec[1].is_empty() {
            None
        } else {
            Some(rec[1].parse().map_err(|_| invalid(format!("bad target id `{}`", &rec[1])))?)
        };
        let train: usize = rec[2].parse().map_err(|_| invalid(format!("bad train id `{}`", &rec[2])))?;
        let value: f64 = rec[3].parse().map_err(|_| invalid(format!("bad value `{}`", &rec[3])))?;
        let start_new = match out.last() {
            Some(last) => last.target_id != target || last.estimator != est,
            None => true,
        };
        if start_new {
            out.push(InfluenceVector::new(est, target, Vec::new()));
        }
        let last = out.last_mut().expect("pushed above");
        if train != last.values.len() {
            return Err(invalid(format!("train ids out of order at {train}")));
        }
        last.values.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::EstimatorKind;

    #[test]
    fn csv_round_trip_sorts_targets() {
        let a = InfluenceVector::new(EstimatorKind::BoostIn, Some(3), vec![0.1, -2.5e-17]);
        let b = InfluenceVector::new(EstimatorKind::BoostIn, Some(1), vec![1.0 / 3.0, 7.0]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("estimator,target_id,train_id,value\nboostin,1,0,"));
        assert_eq!(read_influence(&text).unwrap(), vec![b, a]);
    }
}
