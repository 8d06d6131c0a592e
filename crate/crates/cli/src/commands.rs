//! The workflows behind each subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ldrld_train::checkpoint;
use ldrld_train::data::Split;
use ldrld_train::{distill, train_supervised, Model};
use serde::Serialize;

use crate::config::{load_config, ExperimentConfig, Splits};
use crate::error::{CliError, Result};
use crate::report::{
    write_curves, write_json, write_timing, Aggregate, Baseline, Report, RunSummary, SweepCell, SweepSummary,
    TeacherInfo, SCHEMA_VERSION,
};
use crate::sweep::{cell_name, grid, Axis};

/// Flags shared by the commands that read an experiment config.
#[derive(Debug, Clone, Default)]
pub struct ConfigArgs {
    pub config: PathBuf,
    pub sets: Vec<String>,
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

impl ConfigArgs {
    pub fn load(&self, extra: &[(String, String)]) -> Result<ExperimentConfig> {
        let mut sets = self.sets.clone();
        sets.extend(extra.iter().map(|(k, v)| format!("{k}={v}")));
        let mut cfg = load_config(&self.config, &sets)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn check_teacher(teacher: &Model, splits: &Splits) -> Result<()> {
    if teacher.num_classes() != splits.num_classes() || teacher.input_dim() != splits.dim() {
        return Err(CliError::Config(format!(
            "teacher maps {} features to {} classes; dataset has {} features and {} classes",
            teacher.input_dim(),
            teacher.num_classes(),
            splits.dim(),
            splits.num_classes()
        )));
    }
    Ok(())
}

fn teacher_info(teacher: &Model, splits: &Splits, checkpoint: String) -> Result<TeacherInfo> {
    Ok(TeacherInfo {
        checkpoint,
        train_accuracy: teacher.accuracy(&splits.train)?,
        eval_accuracy: teacher.accuracy(&splits.eval)?,
        validation_accuracy: splits.validation.as_ref().map(|v| teacher.accuracy(v)).transpose()?,
    })
}

fn validation_accuracy(model: &Model, splits: &Splits) -> Result<Option<f64>> {
    Ok(splits.validation.as_ref().map(|v| model.accuracy(v)).transpose()?)
}

pub fn load_teacher(path: &Path) -> Result<Model> {
    checkpoint::load(path).map_err(CliError::Input)
}

/// Trains the teacher and writes `teacher.ckpt`, `teacher_report.json`,
/// `teacher_curves.csv` and `teacher_timing.json` under the output directory.
pub fn train_teacher(args: &ConfigArgs) -> Result<Report> {
    let started = Instant::now();
    let cfg = args.load(&[])?;
    let splits = cfg.dataset.load()?;
    let (report, _) = train_teacher_with(&cfg, &splits)?;
    write_timing(&cfg.out_dir.join("teacher_timing.json"), "train-teacher", started.elapsed().as_secs_f64())?;
    Ok(report)
}

fn train_teacher_with(cfg: &ExperimentConfig, splits: &Splits) -> Result<(Report, Model)> {
    create_dir(&cfg.out_dir)?;
    let spec = cfg.teacher_spec(splits);
    log::info!("training teacher {:?} on {} samples", spec.hidden_dims, splits.train.len());
    let (model, record) = train_supervised(&spec, &cfg.teacher.train, &splits.train, &splits.eval)?;
    checkpoint::save(&model, &cfg.out_dir.join("teacher.ckpt"))?;
    let runs = vec![RunSummary::new(&record, validation_accuracy(&model, splits)?)];
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "train-teacher".into(),
        config: cfg.clone(),
        assignments: Vec::new(),
        teacher: teacher_info(&model, splits, "teacher.ckpt".into())?,
        aggregate: Aggregate::of(&runs),
        runs,
        baseline: None,
        delta_vs_baseline: None,
    };
    write_json(&cfg.out_dir.join("teacher_report.json"), &report)?;
    write_curves(&cfg.out_dir.join("teacher_curves.csv"), &[("teacher", &report.runs)])?;
    log::info!("teacher eval accuracy {:.4}", report.teacher.eval_accuracy);
    Ok((report, model))
}

/// Distills one student per seed (and optionally trains scratch baselines
/// with the same seeds).
pub fn distill_students(args: &ConfigArgs, teacher_path: &Path, baseline: bool) -> Result<Report> {
    let started = Instant::now();
    let cfg = args.load(&[])?;
    let splits = cfg.dataset.load()?;
    let teacher = load_teacher(teacher_path)?;
    let report = distill_with(&cfg, &splits, &teacher, teacher_path.display().to_string(), baseline, Vec::new())?;
    write_timing(&cfg.out_dir.join("distill_timing.json"), "distill", started.elapsed().as_secs_f64())?;
    Ok(report)
}

fn distill_with(
    cfg: &ExperimentConfig,
    splits: &Splits,
    teacher: &Model,
    teacher_label: String,
    baseline: bool,
    assignments: Vec<(String, String)>,
) -> Result<Report> {
    check_teacher(teacher, splits)?;
    cfg.distill.validate(Some(splits.num_classes())).map_err(|e| CliError::Config(format!("distill: {e}")))?;
    create_dir(&cfg.out_dir)?;
    let mut runs = Vec::new();
    let mut base_runs = Vec::new();
    for &seed in &cfg.seeds {
        let spec = cfg.student_spec(splits, seed);
        let tspec = cfg.student_train(seed);
        let (student, record) = distill(teacher, &spec, &tspec, &cfg.distill, &splits.train, &splits.eval)?;
        checkpoint::save(&student, &cfg.out_dir.join(format!("student_seed{seed}.ckpt")))?;
        log::info!("seed {seed}: student eval accuracy {:.4}", record.final_eval_accuracy());
        runs.push(RunSummary::new(&record, validation_accuracy(&student, splits)?));
        if baseline {
            let (scratch, record) = train_supervised(&spec, &tspec, &splits.train, &splits.eval)?;
            checkpoint::save(&scratch, &cfg.out_dir.join(format!("baseline_seed{seed}.ckpt")))?;
            log::info!("seed {seed}: baseline eval accuracy {:.4}", record.final_eval_accuracy());
            base_runs.push(RunSummary::new(&record, validation_accuracy(&scratch, splits)?));
        }
    }
    let aggregate = Aggregate::of(&runs);
    let baseline = baseline.then(|| Baseline { aggregate: Aggregate::of(&base_runs), runs: base_runs });
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "distill".into(),
        config: cfg.clone(),
        assignments,
        teacher: teacher_info(teacher, splits, teacher_label)?,
        delta_vs_baseline: baseline.as_ref().map(|b| aggregate.eval_accuracy.mean - b.aggregate.eval_accuracy.mean),
        aggregate,
        runs,
        baseline,
    };
    write_json(&cfg.out_dir.join("distill_report.json"), &report)?;
    let mut groups: Vec<(&str, &[RunSummary])> = vec![("student", &report.runs)];
    if let Some(b) = &report.baseline {
        groups.push(("baseline", &b.runs));
    }
    write_curves(&cfg.out_dir.join("distill_curves.csv"), &groups)?;
    Ok(report)
}

/// Runs [`distill_students`] once per grid cell, each in its own
/// subdirectory, and writes `sweep_summary.json`. Without a teacher
/// checkpoint one is trained first into the output directory.
pub fn sweep(args: &ConfigArgs, axes: &[Axis], teacher_path: Option<&Path>, baseline: bool) -> Result<SweepSummary> {
    let started = Instant::now();
    if axes.is_empty() {
        return Err(CliError::Config("sweep needs at least one --sweep axis".into()));
    }
    for a in axes {
        if a.key.starts_with("teacher") || a.key.starts_with("dataset") || a.key == "out_dir" || a.key == "seeds" {
            return Err(CliError::Config(format!(
                "cannot sweep {:?}: the teacher and data are shared by every cell",
                a.key
            )));
        }
    }
    let base = args.load(&[])?;
    let splits = base.dataset.load()?;
    let (teacher, label) = match teacher_path {
        Some(p) => (load_teacher(p)?, p.display().to_string()),
        None => {
            let (_, model) = train_teacher_with(&base, &splits)?;
            (model, "teacher.ckpt".to_string())
        }
    };
    check_teacher(&teacher, &splits)?;
    let mut cells = Vec::new();
    for cell in grid(axes) {
        let name = cell_name(&cell);
        let mut cfg = args.load(&cell)?;
        cfg.out_dir = base.out_dir.join(&name);
        log::info!("sweep cell {name}");
        let report = distill_with(&cfg, &splits, &teacher, label.clone(), baseline, cell.clone())?;
        cells.push(SweepCell {
            assignments: cell,
            report: format!("{name}/distill_report.json"),
            aggregate: report.aggregate,
        });
    }
    let summary = SweepSummary {
        schema_version: SCHEMA_VERSION,
        command: "sweep".into(),
        config: base.clone(),
        teacher: teacher_info(&teacher, &splits, label)?,
        best_by_validation: SweepSummary::pick_best(&cells),
        cells,
    };
    write_json(&base.out_dir.join("sweep_summary.json"), &summary)?;
    write_timing(&base.out_dir.join("sweep_timing.json"), "sweep", started.elapsed().as_secs_f64())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub checkpoint: String,
    pub split: Split,
    pub samples: usize,
    pub accuracy: f64,
}

pub fn evaluate(args: &ConfigArgs, model_path: &Path, split: Split) -> Result<EvalResult> {
    let cfg = args.load(&[])?;
    let splits = cfg.dataset.load()?;
    let model = load_teacher(model_path)?;
    check_teacher(&model, &splits)?;
    let ds = match split {
        Split::Train => &splits.train,
        Split::Eval => &splits.eval,
        Split::Validation => {
            splits.validation.as_ref().ok_or_else(|| CliError::Config("dataset has no validation split".into()))?
        }
    };
    Ok(EvalResult {
        checkpoint: model_path.display().to_string(),
        split,
        samples: ds.len(),
        accuracy: model.accuracy(ds)?,
    })
}
