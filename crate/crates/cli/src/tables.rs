//! CSV artifacts exchanged between stages.

use std::path::Path;

use audrop_core::uncertainty::{FeatureVector, HIST_BINS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    /// Relative to the corpus directory.
    pub wav_path: String,
    pub transcript: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub wav_in: String,
    pub wav_out: String,
    pub attack_type: String,
    pub success_plain: bool,
    pub success_dropout: bool,
    pub success_denoised: bool,
    pub db_gap: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature_mode: String,
    pub classifier: String,
    pub attack: String,
    pub accuracy: f64,
    pub auc: f64,
}

pub fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<R>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

pub const CORPUS_HEADER: [&str; 2] = ["wav_path", "transcript"];
pub const ATTACK_HEADER: [&str; 8] =
    ["wav_in", "wav_out", "attack_type", "success_plain", "success_dropout", "success_denoised", "db_gap", "iterations"];
pub const REPORT_HEADER: [&str; 5] = ["feature_mode", "classifier", "attack", "accuracy", "auc"];

/// Label of clean samples in feature and histogram tables.
pub const ORIGINAL: &str = "original";

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub sample_id: String,
    /// `original` or the attack name.
    pub label: String,
    pub features: FeatureVector,
    /// Raw char-mode histogram counts.
    pub counts: Option<Vec<usize>>,
}

fn feature_header() -> Vec<String> {
    let mut h: Vec<String> =
        ["sample_id", "label", "m1", "m2", "m3", "m4", "u2", "entropy"].iter().map(|s| s.to_string()).collect();
    h.extend((0..HIST_BINS).map(|i| format!("h{i}")));
    h
}

pub fn write_features(path: &Path, records: &[FeatureRecord]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    w.write_record(feature_header())?;
    for r in records {
        let f = &r.features;
        let mut row = vec![r.sample_id.clone(), r.label.clone()];
        row.extend([f.m1, f.m2, f.m3, f.m4, f.u2].iter().map(|v| v.to_string()));
        row.push(f.entropy.map(|e| e.to_string()).unwrap_or_default());
        match &r.counts {
            Some(c) => row.extend(c.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat(String::new()).take(HIST_BINS)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> CliResult<Vec<FeatureRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |what: &str| CliError::Failed(format!("{}: malformed {what}", path.display()));
    if r.headers()?.iter().collect::<Vec<_>>() != feature_header() {
        return Err(bad("header"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad("number"));
        let entropy = if rec[7].is_empty() { None } else { Some(num(7)?) };
        let counts = if rec[8].is_empty() {
            None
        } else {
            Some((8..8 + HIST_BINS).map(|i| rec[i].parse::<usize>().map_err(|_| bad("count"))).collect::<CliResult<Vec<_>>>()?)
        };
        let full_hist = counts.as_ref().map(|c| {
            let total: usize = c.iter().sum();
            c.iter().map(|&v| v as f64 / total as f64).collect()
        });
        out.push(FeatureRecord {
            sample_id: rec[0].to_string(),
            label: rec[1].to_string(),
            features: FeatureVector { m1: num(2)?, m2: num(3)?, m3: num(4)?, m4: num(5)?, u2: num(6)?, entropy, full_hist },
            counts,
        });
    }
    Ok(out)
}

/// One row per label: the mean histogram count of each bin.
pub fn write_mean_histogram(path: &Path, records: &[FeatureRecord]) -> CliResult<()> {
    let mut labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
    labels.sort_by_key(|l| (*l != ORIGINAL, *l));
    labels.dedup();
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..HIST_BINS).map(|i| format!("h{i}")));
    w.write_record(&header)?;
    for label in labels {
        let group: Vec<&Vec<usize>> =
            records.iter().filter(|r| r.label == label).filter_map(|r| r.counts.as_ref()).collect();
        if group.is_empty() {
            continue;
        }
        let mut row = vec![label.to_string()];
        for bin in 0..HIST_BINS {
            let mean = group.iter().map(|c| c[bin] as f64).sum::<f64>() / group.len() as f64;
            row.push(mean.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, label: &str, counts: Option<Vec<usize>>) -> FeatureRecord {
        let full_hist = counts.as_ref().map(|c| {
            let t: usize = c.iter().sum();
            c.iter().map(|&v| v as f64 / t as f64).collect()
        });
        FeatureRecord {
            sample_id: id.into(),
            label: label.into(),
            features: FeatureVector {
                m1: 0.1,
                m2: 1.0 / 3.0,
                m3: 2.5e-9,
                m4: 7.0,
                u2: 1.0 / 3.0,
                entropy: counts.as_ref().map(|_| 0.25),
                full_hist,
            },
            counts,
        }
    }

    fn counts(first: usize, total: usize) -> Vec<usize> {
        let mut c = vec![0; HIST_BINS];
        c[0] = first;
        c[HIST_BINS - 1] = total - first;
        c
    }

    #[test]
    fn features_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let recs = vec![record("a", ORIGINAL, Some(counts(40, 50))), record("a_cw", "cw", Some(counts(3, 50)))];
        write_features(&path, &recs).unwrap();
        assert_eq!(read_features(&path).unwrap(), recs);
        let prob = vec![record("b", ORIGINAL, None)];
        write_features(&path, &prob).unwrap();
        assert_eq!(read_features(&path).unwrap(), prob);
    }

    #[test]
    fn mean_histogram_rows_sum_to_realization_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let recs = vec![
            record("a", ORIGINAL, Some(counts(50, 50))),
            record("b", ORIGINAL, Some(counts(47, 50))),
            record("a_dr", "dr", Some(counts(5, 50))),
        ];
        write_mean_histogram(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert!(rows[0].starts_with("original,"));
        for row in rows {
            let sum: f64 = row.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
            assert!((sum - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn attack_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![AttackRow {
            wav_in: "x.wav".into(),
            wav_out: "y.wav".into(),
            attack_type: "cw".into(),
            success_plain: true,
            success_dropout: false,
            success_denoised: true,
            db_gap: 31.25,
            iterations: 1000,
        }];
        write_rows(&path, &ATTACK_HEADER, &rows).unwrap();
        assert_eq!(read_rows::<AttackRow>(&path).unwrap(), rows);
    }
}
