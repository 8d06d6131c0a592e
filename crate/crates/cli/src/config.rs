//! Experiment configuration: a TOML file plus dotted `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use ldrld_core::DistillConfig;
use ldrld_train::data::{self, BlobsSpec, Dataset, DelimitedOptions, Split};
use ldrld_train::{MlpSpec, TrainSpec};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs(BlobsSpec),
    Delimited(DelimitedSource),
    Idx(IdxSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelimitedSource {
    pub train: PathBuf,
    pub eval: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    #[serde(default = "comma")]
    pub delimiter: char,
    pub label_column: usize,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

fn comma() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub eval_images: PathBuf,
    pub eval_labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

/// Network shape; input and output widths come from the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleConfig {
    pub model: NetConfig,
    pub train: TrainSpec,
}

/// One experiment. Each entry of `seeds` drives a student's initialization
/// and batch order; `student.model.seed` and `student.train.seed` are
/// replaced by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub teacher: RoleConfig,
    pub student: RoleConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

/// Train, optional validation, and eval splits.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub eval: Dataset,
}

impl Splits {
    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes()
    }
}

/// Parses TOML text after applying `overrides` (each `a.b.c=value`).
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: Table = text.parse().map_err(|e| CliError::Config(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig = Value::Table(table).try_into().map_err(|e| CliError::Config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` and resolves relative dataset paths against its directory.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text, overrides)?;
    if let Some(base) = path.parent() {
        cfg.dataset.resolve_paths(base);
    }
    Ok(cfg)
}

/// Sets one dotted key. The value is read as a TOML literal when it parses as
/// one and as a bare string otherwise.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} is malformed")));
    }
    let value = parse_value(raw.trim());
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for p in path {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override {key:?}: {p:?} is not a table"))),
        };
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad(format!("seeds must be distinct, got {:?}", self.seeds));
        }
        for (role, r) in [("teacher", &self.teacher), ("student", &self.student)] {
            r.train.validate().map_err(|e| CliError::Config(format!("{role}.train: {e}")))?;
            if r.model.hidden_dims.contains(&0) {
                return bad(format!("{role}.model.hidden_dims must be >= 1"));
            }
        }
        self.distill.validate(None).map_err(|e| CliError::Config(format!("distill: {e}")))?;
        Ok(())
    }

    pub fn teacher_spec(&self, splits: &Splits) -> MlpSpec {
        MlpSpec {
            input_dim: splits.dim(),
            hidden_dims: self.teacher.model.hidden_dims.clone(),
            num_classes: splits.num_classes(),
            seed: self.teacher.model.seed,
        }
    }

    pub fn student_spec(&self, splits: &Splits, seed: u64) -> MlpSpec {
        MlpSpec {
            input_dim: splits.dim(),
            hidden_dims: self.student.model.hidden_dims.clone(),
            num_classes: splits.num_classes(),
            seed,
        }
    }

    pub fn student_train(&self, seed: u64) -> TrainSpec {
        TrainSpec { seed, ..self.student.train.clone() }
    }
}

impl DatasetConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetConfig::Blobs(_) => {}
            DatasetConfig::Delimited(d) => {
                fix(&mut d.train);
                fix(&mut d.eval);
                d.validation.as_mut().map(fix);
            }
            DatasetConfig::Idx(d) => {
                for p in [&mut d.train_images, &mut d.train_labels, &mut d.eval_images, &mut d.eval_labels] {
                    fix(p);
                }
                d.validation_images.as_mut().map(fix);
                d.validation_labels.as_mut().map(fix);
            }
        }
    }

    /// Loads every split. Errors here are input errors.
    pub fn load(&self) -> Result<Splits> {
        let splits = match self {
            DatasetConfig::Blobs(spec) => Splits {
                train: data::make_blobs(spec, Split::Train).map_err(CliError::Input)?,
                validation: Some(data::make_blobs(spec, Split::Validation).map_err(CliError::Input)?),
                eval: data::make_blobs(spec, Split::Eval).map_err(CliError::Input)?,
            },
            DatasetConfig::Delimited(d) => {
                let opts = DelimitedOptions {
                    delimiter: d.delimiter,
                    label_column: d.label_column,
                    has_header: d.has_header,
                    num_classes: d.num_classes,
                };
                let load = |p: &Path, s| data::load_delimited(p, &opts, s).map_err(CliError::Input);
                harmonize(
                    load(&d.train, Split::Train)?,
                    d.validation.as_deref().map(|p| load(p, Split::Validation)).transpose()?,
                    load(&d.eval, Split::Eval)?,
                )?
            }
            DatasetConfig::Idx(d) => {
                let load = |i: &Path, l: &Path, s| data::load_idx(i, l, d.num_classes, s).map_err(CliError::Input);
                let validation = match (&d.validation_images, &d.validation_labels) {
                    (Some(i), Some(l)) => Some(load(i, l, Split::Validation)?),
                    (None, None) => None,
                    _ => {
                        return Err(CliError::Config(
                            "validation_images and validation_labels must be given together".into(),
                        ))
                    }
                };
                harmonize(
                    load(&d.train_images, &d.train_labels, Split::Train)?,
                    validation,
                    load(&d.eval_images, &d.eval_labels, Split::Eval)?,
                )?
            }
        };
        Ok(splits)
    }
}

/// Gives all splits the largest inferred class count and checks their widths.
fn harmonize(train: Dataset, validation: Option<Dataset>, eval: Dataset) -> Result<Splits> {
    let classes = [Some(&train), validation.as_ref(), Some(&eval)]
        .into_iter()
        .flatten()
        .map(Dataset::num_classes)
        .max()
        .expect("train is present");
    for ds in [validation.as_ref(), Some(&eval)].into_iter().flatten() {
        if ds.dim() != train.dim() {
            return Err(CliError::Config(format!(
                "{:?} split has {} features, train has {}",
                ds.split(),
                ds.dim(),
                train.dim()
            )));
        }
    }
    let fix = |ds: Dataset| ds.with_num_classes(classes).map_err(CliError::Input);
    Ok(Splits { train: fix(train)?, validation: validation.map(fix).transpose()?, eval: fix(eval)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        seeds = [0, 1]
        [dataset]
        kind = "blobs"
        classes = 5
        per_class = 4
        dim = 3
        spread = 0.2
        seed = 1
        [teacher.model]
        hidden_dims = [8]
        [teacher.train]
        epochs = 2
        batch_size = 4
        lr = 0.1
        [student.model]
        hidden_dims = [4]
        [student.train]
        epochs = 2
        batch_size = 4
        lr = 0.1
        [distill]
        depth = 3
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = parse_config(BASE, &[]).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.distill.depth, 3);
        assert_eq!(cfg.distill.tau, 4.0);
        assert_eq!(cfg.teacher.train.momentum, 0.9);
        assert_eq!(cfg.out_dir, PathBuf::from("runs"));
        assert!(matches!(cfg.dataset, DatasetConfig::Blobs(BlobsSpec { classes: 5, .. })));
    }

    #[test]
    fn overrides_apply_by_type() {
        let sets = [
            "distill.alpha=0".to_string(),
            "distill.adw.epsilon=2.5".to_string(),
            "teacher.model.hidden_dims=[3, 3]".to_string(),
            "out_dir=elsewhere".to_string(),
            "distill.adw_enabled=false".to_string(),
        ];
        let cfg = parse_config(BASE, &sets).unwrap();
        assert_eq!(cfg.distill.alpha, 0.0);
        assert_eq!(cfg.distill.adw.epsilon, 2.5);
        assert_eq!(cfg.teacher.model.hidden_dims, vec![3, 3]);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert!(!cfg.distill.adw_enabled);
    }

    #[test]
    fn integer_literal_where_float_expected() {
        let cfg = parse_config(BASE, &["distill.tau=2".to_string()]).unwrap();
        assert_eq!(cfg.distill.tau, 2.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in ["distill.alhpa=1", "teacher.train.lr_decay=0.1", "dataset.colour=3", "extra=1"] {
            let err = parse_config(BASE, &[bad.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}: {err}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in ["distill.tau=0", "seeds=[]", "seeds=[1, 1]", "student.train.momentum=1.0", "distill.depth=1"] {
            assert!(parse_config(BASE, &[bad.to_string()]).is_err(), "{bad}");
        }
        assert!(parse_config(BASE, &["novalue".to_string()]).is_err());
        assert!(parse_config(BASE, &["seeds.x=1".to_string()]).is_err());
        assert!(parse_config(BASE, &["a..b=1".to_string()]).is_err());
        assert!(parse_config("not toml [", &[]).is_err());
    }

    #[test]
    fn blobs_load_three_splits() {
        let s = parse_config(BASE, &[]).unwrap().dataset.load().unwrap();
        assert_eq!((s.train.len(), s.dim(), s.num_classes()), (20, 3, 5));
        assert!(s.validation.is_some());
        assert_ne!(s.train, s.eval);
    }

    #[test]
    fn delimited_classes_harmonized() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tr.csv"), "0.1,0.2,0\n0.3,0.4,1\n").unwrap();
        fs::write(dir.path().join("ev.csv"), "0.1,0.2,2\n0.3,0.4,1\n").unwrap();
        let text = BASE.replace(
            "kind = \"blobs\"\n        classes = 5\n        per_class = 4\n        dim = 3\n        spread = 0.2\n        seed = 1",
            "kind = \"delimited\"\n        train = \"tr.csv\"\n        eval = \"ev.csv\"\n        label_column = 2",
        );
        let path = dir.path().join("exp.toml");
        fs::write(&path, text).unwrap();
        let cfg = load_config(&path, &[]).unwrap();
        let s = cfg.dataset.load().unwrap();
        assert_eq!((s.train.num_classes(), s.eval.num_classes()), (3, 3));
        assert!(s.validation.is_none());

        let missing = load_config(&path, &["dataset.eval=nope.csv".to_string()]).unwrap();
        let err = missing.dataset.load().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("nope.csv"));
    }
}
