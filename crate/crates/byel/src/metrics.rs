//! CSV metric logs, JSON reports and per-image prediction files.

use std::fs;
use std::path::Path;

use byel_core::eval::MetricsReport;
use byel_core::pretrain::StepRecord;
use byel_core::transfer::EpochReport;
use byel_core::{EmotionLabel, NUM_CLASSES};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result, RunError};

pub const PRETRAIN_COLUMNS: [&str; 9] =
    ["step", "epoch", "tau", "byol", "byol_swapped", "classify", "classify_swapped", "orthogonal", "total"];

/// Shortest text that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(path: &Path, e: csv::Error) -> RunError {
    RunError::io(format!("csv {}", path.display()), e.into())
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>], append: bool) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
    }
    let fresh = !append || !path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(path)
        .ctx(|| format!("opening {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(header).map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().ctx(|| format!("flushing {}", path.display()))
}

pub fn pretrain_row(r: &StepRecord) -> Vec<String> {
    let l = &r.loss;
    vec![
        r.step.to_string(),
        r.epoch.to_string(),
        num(r.tau),
        num(l.byol),
        num(l.byol_swapped),
        num(l.classify),
        num(l.classify_swapped),
        num(l.orthogonal),
        num(l.total),
    ]
}

pub fn append_pretrain(path: &Path, records: &[StepRecord]) -> Result<()> {
    let header: Vec<String> = PRETRAIN_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = records.iter().map(pretrain_row).collect();
    write_rows(path, &header, &rows, true)
}

/// Drops every row past `last_step`, used when resuming a run.
pub fn truncate_pretrain(path: &Path, last_step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut keep = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let step: u64 = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RunError::Parse { what: "metrics", line: i + 2, message: "bad step".into() })?;
        if step <= last_step {
            keep.push(rec.iter().map(String::from).collect());
        }
    }
    write_rows(path, &header, &keep, false)
}

/// One parsed pre-training log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainRow {
    pub step: u64,
    pub epoch: usize,
    pub tau: f64,
    pub total: f64,
}

pub fn read_pretrain(path: &Path) -> Result<Vec<PretrainRow>> {
    if !path.exists() {
        return Err(RunError::MissingArtifact(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = || RunError::Parse { what: "metrics", line: i + 2, message: "malformed row".into() };
        let f = |k: usize| rec.get(k).ok_or_else(bad);
        rows.push(PretrainRow {
            step: f(0)?.parse().map_err(|_| bad())?,
            epoch: f(1)?.parse().map_err(|_| bad())?,
            tau: f(2)?.parse().map_err(|_| bad())?,
            total: f(8)?.parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

pub fn transfer_header() -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "train_loss", "val_macro_f1"].iter().map(|s| s.to_string()).collect();
    h.extend(EmotionLabel::all().map(|l| format!("f1_{}", l.name().to_lowercase())));
    h
}

pub fn write_transfer(path: &Path, history: &[EpochReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            let mut row = vec![r.epoch.to_string(), num(r.train_loss), num(r.validation.macro_f1)];
            row.extend(r.validation.per_class_f1.iter().map(|v| num(*v)));
            row
        })
        .collect();
    write_rows(path, &transfer_header(), &rows, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub checkpoint: String,
    pub num_images: u64,
    pub macro_f1: f64,
    pub per_class_precision: [f64; NUM_CLASSES],
    pub per_class_recall: [f64; NUM_CLASSES],
    pub per_class_f1: [f64; NUM_CLASSES],
    pub class_names: Vec<String>,
    /// Rows are true classes, columns predictions.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ReportJson {
    pub fn new(checkpoint: &str, r: &MetricsReport) -> Self {
        Self {
            checkpoint: checkpoint.into(),
            num_images: r.confusion.total(),
            macro_f1: r.macro_f1,
            per_class_precision: r.per_class_precision,
            per_class_recall: r.per_class_recall,
            per_class_f1: r.per_class_f1,
            class_names: EmotionLabel::all().map(|l| l.name().to_string()).collect(),
            confusion: r.confusion.counts,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").ctx(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(RunError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| RunError::Parse { what: "json", line: e.line(), message: e.to_string() })
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionLine<'a> {
    image: &'a str,
    #[serde(rename = "true")]
    truth: usize,
    pred: usize,
}

pub fn write_predictions(path: &Path, images: &[String], truths: &[EmotionLabel], preds: &[EmotionLabel]) -> Result<()> {
    let mut out = String::new();
    for ((image, t), p) in images.iter().zip(truths).zip(preds) {
        let line = PredictionLine { image, truth: t.index(), pred: p.index() };
        out.push_str(&serde_json::to_string(&line).expect("plain struct"));
        out.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, out).ctx(|| format!("writing {}", path.display()))
}

/// Points at the selected transfer checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPointer {
    pub checkpoint: String,
    pub epoch: usize,
    pub macro_f1: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use byel_core::losses::LossBreakdown;

    fn record(step: u64) -> StepRecord {
        let loss = LossBreakdown {
            byol: 0.1 + step as f64,
            byol_swapped: 1.0 / 3.0,
            classify: 2.0,
            classify_swapped: 1e-17,
            orthogonal: 5.0,
            total: 7.25,
        };
        StepRecord { step, epoch: 1, tau: 0.996_123_456_789_f64, loss }
    }

    #[test]
    fn pretrain_log_round_trip_and_truncate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m/pretrain.csv");
        append_pretrain(&path, &[record(1), record(2)]).unwrap();
        append_pretrain(&path, &[record(3)]).unwrap();
        let rows = read_pretrain(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].tau, 0.996_123_456_789);
        assert_eq!(rows[2].step, 3);
        truncate_pretrain(&path, 2).unwrap();
        assert_eq!(read_pretrain(&path).unwrap().len(), 2);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,epoch,tau,byol,byol_swapped,classify,classify_swapped,orthogonal,total\n"));
    }

    #[test]
    fn transfer_header_columns() {
        let h = transfer_header();
        assert_eq!(h.len(), 9);
        assert_eq!(h[3], "f1_anger");
        assert_eq!(h[8], "f1_surprise");
    }
}
