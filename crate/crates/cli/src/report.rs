//! JSON reports, CSV curves and the wall-clock sidecar.
//!
//! Reports hold only values that are a pure function of the echoed config and
//! seeds, so reruns are byte-identical. Timing goes to a separate file.

use std::fs;
use std::path::Path;

use ldrld_core::LossBreakdown;
use ldrld_train::{EpochRecord, TrainRecord};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stats {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / n };
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub final_train_accuracy: f64,
    pub final_eval_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_validation_accuracy: Option<f64>,
    pub final_loss: LossBreakdown,
    pub epochs: Vec<EpochRecord>,
}

impl RunSummary {
    pub fn new(record: &TrainRecord, validation_accuracy: Option<f64>) -> Self {
        Self {
            seed: record.seed,
            final_train_accuracy: record.final_train_accuracy(),
            final_eval_accuracy: record.final_eval_accuracy(),
            final_validation_accuracy: validation_accuracy,
            final_loss: record.epochs.last().map(|e| e.loss).unwrap_or_default(),
            epochs: record.epochs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub eval_accuracy: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<Stats>,
}

impl Aggregate {
    pub fn of(runs: &[RunSummary]) -> Self {
        let validation: Option<Vec<f64>> = runs.iter().map(|r| r.final_validation_accuracy).collect();
        Self {
            eval_accuracy: Stats::of(runs.iter().map(|r| r.final_eval_accuracy).collect()),
            validation_accuracy: validation.map(Stats::of),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherInfo {
    pub checkpoint: String,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    /// Overrides applied on top of the config for this report (sweep cells).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<(String, String)>,
    pub teacher: TeacherInfo,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Baseline>,
    /// Mean eval accuracy minus the baseline's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub assignments: Vec<(String, String)>,
    pub report: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub teacher: TeacherInfo,
    pub cells: Vec<SweepCell>,
    /// Index of the cell with the highest mean validation accuracy (first on
    /// ties); absent without a validation split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_by_validation: Option<usize>,
}

impl SweepSummary {
    pub fn pick_best(cells: &[SweepCell]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in cells.iter().enumerate() {
            let v = c.aggregate.validation_accuracy.as_ref()?.mean;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug, Serialize)]
struct Timing<'a> {
    command: &'a str,
    wall_clock_seconds: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("serialize: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_timing(path: &Path, command: &str, seconds: f64) -> Result<()> {
    write_json(path, &Timing { command, wall_clock_seconds: seconds })
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    run: &'a str,
    seed: u64,
    epoch: usize,
    lr: f64,
    task: f64,
    weighted_pairs: f64,
    llki: f64,
    rntk: f64,
    kd: f64,
    total: f64,
    train_accuracy: f64,
    eval_accuracy: f64,
}

/// One CSV row per (run, epoch).
pub fn write_curves(path: &Path, groups: &[(&str, &[RunSummary])]) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for (name, runs) in groups {
        for r in *runs {
            for e in &r.epochs {
                w.serialize(CurveRow {
                    run: name,
                    seed: r.seed,
                    epoch: e.epoch,
                    lr: e.lr,
                    task: e.loss.task,
                    weighted_pairs: e.loss.weighted_pairs,
                    llki: e.loss.llki,
                    rntk: e.loss.rntk,
                    kd: e.loss.kd,
                    total: e.loss.total,
                    train_accuracy: e.train_accuracy,
                    eval_accuracy: e.eval_accuracy,
                })
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_mean_and_sample_std() {
        let s = Stats::of(vec![0.5, 0.7, 0.9]);
        assert!((s.mean - 0.7).abs() < 1e-15);
        assert!((s.std - 0.2).abs() < 1e-15);
        assert_eq!(Stats::of(vec![0.4]).std, 0.0);
    }

    fn cell(v: Option<f64>) -> SweepCell {
        SweepCell {
            assignments: vec![],
            report: String::new(),
            aggregate: Aggregate {
                eval_accuracy: Stats::of(vec![0.0]),
                validation_accuracy: v.map(|v| Stats::of(vec![v])),
            },
        }
    }

    #[test]
    fn best_cell_first_on_ties() {
        assert_eq!(SweepSummary::pick_best(&[cell(Some(0.5)), cell(Some(0.7)), cell(Some(0.7))]), Some(1));
        assert_eq!(SweepSummary::pick_best(&[cell(Some(0.5)), cell(None)]), None);
        assert_eq!(SweepSummary::pick_best(&[]), None);
    }
}
