//! Supervised training and teacher→student distillation over mini-batches.
//!
//! Both entry points share one loop: shuffle, forward, objective, backward,
//! SGD step. Everything is single-threaded and seeded, so a rerun with the
//! same specs reproduces every parameter bit for bit.

use ldrld_core::losses::{batch_objective, supervised_objective, DistillConfig, LossBreakdown};
use ldrld_core::tensor::{Tape, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::{epoch_order, Dataset};
use crate::error::{Error, Result};
use crate::model::{argmax, MlpSpec, Model};
use crate::optim::{LrSchedule, Sgd};

fn default_momentum() -> f64 {
    0.9
}

fn default_weight_decay() -> f64 {
    5e-4
}

fn default_drop_factor() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub warmup_epochs: usize,
    /// Epochs at which the rate is multiplied by `lr_drop_factor`. When unset,
    /// drops fall at 62.5%, 75% and 87.5% of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_drop_epochs: Option<Vec<usize>>,
    #[serde(default = "default_drop_factor")]
    pub lr_drop_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TrainSpec {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            lr,
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            warmup_epochs: 0,
            lr_drop_epochs: None,
            lr_drop_factor: default_drop_factor(),
            seed,
        }
    }

    pub fn drop_epochs(&self) -> Vec<usize> {
        match &self.lr_drop_epochs {
            Some(d) => d.clone(),
            None => {
                let mut d: Vec<usize> = [5, 6, 7].iter().map(|k| self.epochs * k / 8).filter(|&e| e > 0).collect();
                d.dedup();
                d
            }
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { base: self.lr, warmup: self.warmup_epochs, drops: self.drop_epochs(), factor: self.lr_drop_factor }
    }

    /// A zero learning rate is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor.is_finite()) {
            return bad(format!("lr_drop_factor must be > 0, got {}", self.lr_drop_factor));
        }
        if let Some(d) = &self.lr_drop_epochs {
            if d.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("lr_drop_epochs must be strictly increasing, got {d:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's mini-batches of each batch's mean loss.
    pub loss: LossBreakdown,
    /// Running accuracy of the forward passes made during the epoch.
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
}

/// Per-epoch history of one run. The trained parameters are returned next to
/// it as a [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainRecord {
    pub fn final_eval_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.eval_accuracy)
    }

    pub fn final_train_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.train_accuracy)
    }
}

/// Index lists of each mini-batch in one epoch, in visiting order.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    epoch_order(n, seed, epoch).chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

fn check_data(spec: &MlpSpec, train: &Dataset, eval: &Dataset) -> Result<()> {
    for ds in [train, eval] {
        if ds.num_classes() != spec.num_classes {
            return Err(Error::DimensionMismatch {
                what: "dataset class count",
                expected: spec.num_classes,
                got: ds.num_classes(),
            });
        }
        if ds.dim() != spec.input_dim {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: spec.input_dim,
                got: ds.dim(),
            });
        }
    }
    Ok(())
}

fn run<F>(
    model: &mut Model,
    tspec: &TrainSpec,
    train: &Dataset,
    eval: &Dataset,
    mut objective: F,
) -> Result<TrainRecord>
where
    F: for<'t> FnMut(Tensor<'t>, &[usize], &[usize]) -> ldrld_core::Result<(Tensor<'t>, LossBreakdown)>,
{
    tspec.validate()?;
    let schedule = tspec.schedule();
    let mut opt = Sgd::new(tspec.momentum, tspec.weight_decay)?;
    let mut epochs = Vec::with_capacity(tspec.epochs);
    for epoch in 0..tspec.epochs {
        let lr = schedule.at(epoch);
        let mut losses = Vec::new();
        let mut hits = 0usize;
        for idx in epoch_batches(train.len(), tspec.batch_size, tspec.seed, epoch) {
            let (x, y) = train.gather(&idx);
            let tape = Tape::new();
            let (logits, leaves) = model.forward(&tape, x, idx.len())?;
            let classes = model.num_classes();
            hits += logits.value().chunks(classes).zip(&y).filter(|(row, &label)| argmax(row) == label).count();
            let (loss, breakdown) = objective(logits, &idx, &y)?;
            loss.backward()?;
            let grads: Vec<Vec<f64>> =
                leaves.iter().map(|l| l.grad().expect("parameter leaves track gradients")).collect();
            opt.step(&mut model.params_mut(), &grads, lr)?;
            losses.push(breakdown);
        }
        let loss = LossBreakdown::mean(&losses).ok_or(Error::EmptyDataset)?;
        let record = EpochRecord {
            epoch,
            lr,
            loss,
            train_accuracy: hits as f64 / train.len() as f64,
            eval_accuracy: model.accuracy(eval)?,
        };
        log::debug!(
            "epoch {epoch}: lr {lr:.4} loss {:.5} train {:.4} eval {:.4}",
            record.loss.total,
            record.train_accuracy,
            record.eval_accuracy
        );
        epochs.push(record);
    }
    Ok(TrainRecord { seed: tspec.seed, epochs })
}

/// Trains a fresh model from `spec` on cross-entropy alone.
pub fn train_supervised(
    spec: &MlpSpec,
    tspec: &TrainSpec,
    train: &Dataset,
    eval: &Dataset,
) -> Result<(Model, TrainRecord)> {
    let mut model = Model::init(spec)?;
    check_data(spec, train, eval)?;
    let record = run(&mut model, tspec, train, eval, |logits, _, labels| supervised_objective(logits, labels))?;
    Ok((model, record))
}

/// Trains a fresh student from `spec` against a fixed teacher.
///
/// The teacher is only read. Its logits for the whole training set are
/// computed once up front; since its parameters never change this matches a
/// gradient-free teacher forward per batch.
pub fn distill(
    teacher: &Model,
    spec: &MlpSpec,
    tspec: &TrainSpec,
    cfg: &DistillConfig,
    train: &Dataset,
    eval: &Dataset,
) -> Result<(Model, TrainRecord)> {
    let mut student = Model::init(spec)?;
    check_data(spec, train, eval)?;
    if teacher.num_classes() != spec.num_classes {
        return Err(Error::DimensionMismatch {
            what: "teacher class count",
            expected: spec.num_classes,
            got: teacher.num_classes(),
        });
    }
    if teacher.input_dim() != train.dim() {
        return Err(Error::DimensionMismatch {
            what: "teacher input dimension",
            expected: train.dim(),
            got: teacher.input_dim(),
        });
    }
    cfg.validate(Some(spec.num_classes))?;
    let classes = spec.num_classes;
    let teacher_logits = teacher.logits(train.features(), train.len())?;
    let record = run(&mut student, tspec, train, eval, |logits, idx, labels| {
        let t: Vec<f64> = idx.iter().flat_map(|&i| &teacher_logits[i * classes..(i + 1) * classes]).copied().collect();
        batch_objective(logits, &t, labels, cfg)
    })?;
    Ok((student, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, BlobsSpec, Split};

    fn blobs() -> (Dataset, Dataset) {
        let spec = BlobsSpec { classes: 3, per_class: 12, dim: 4, spread: 0.3, seed: 1 };
        (make_blobs(&spec, Split::Train).unwrap(), make_blobs(&spec, Split::Eval).unwrap())
    }

    fn mlp() -> MlpSpec {
        MlpSpec { input_dim: 4, hidden_dims: vec![6], num_classes: 3, seed: 2 }
    }

    #[test]
    fn default_drops() {
        assert_eq!(TrainSpec::new(40, 8, 0.1, 0).drop_epochs(), vec![25, 30, 35]);
        assert_eq!(TrainSpec::new(1, 8, 0.1, 0).drop_epochs(), Vec::<usize>::new());
        assert_eq!(TrainSpec::new(2, 8, 0.1, 0).drop_epochs(), vec![1]);
    }

    #[test]
    fn validation() {
        let ok = TrainSpec::new(3, 4, 0.1, 0);
        assert!(ok.validate().is_ok());
        assert!(TrainSpec { lr: 0.0, ..ok.clone() }.validate().is_ok());
        assert!(TrainSpec { lr: -0.1, ..ok.clone() }.validate().is_err());
        assert!(TrainSpec { momentum: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainSpec { epochs: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainSpec { batch_size: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainSpec { lr_drop_epochs: Some(vec![2, 2]), ..ok.clone() }.validate().is_err());
        assert!(TrainSpec { lr_drop_factor: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn batches_cover_each_sample_once() {
        let b = epoch_batches(10, 3, 5, 2);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn record_has_one_entry_per_epoch() {
        let (tr, ev) = blobs();
        let (_, rec) = train_supervised(&mlp(), &TrainSpec::new(4, 8, 0.05, 3), &tr, &ev).unwrap();
        assert_eq!(rec.epochs.len(), 4);
        assert_eq!(rec.seed, 3);
        for (e, r) in rec.epochs.iter().enumerate() {
            assert_eq!(r.epoch, e);
            assert!((0.0..=1.0).contains(&r.eval_accuracy));
            assert_eq!(r.loss.total, r.loss.task);
        }
    }

    #[test]
    fn dimension_mismatches() {
        let (tr, ev) = blobs();
        let t = TrainSpec::new(1, 8, 0.05, 0);
        assert!(train_supervised(&MlpSpec { num_classes: 4, ..mlp() }, &t, &tr, &ev).is_err());
        assert!(train_supervised(&MlpSpec { input_dim: 5, ..mlp() }, &t, &tr, &ev).is_err());
        let teacher = Model::init(&MlpSpec { num_classes: 4, ..mlp() }).unwrap();
        assert!(distill(&teacher, &mlp(), &t, &DistillConfig { depth: 3, ..Default::default() }, &tr, &ev).is_err());
        let teacher = Model::init(&mlp()).unwrap();
        assert!(distill(&teacher, &mlp(), &t, &DistillConfig::default(), &tr, &ev).is_err(), "d > C");
    }
}
