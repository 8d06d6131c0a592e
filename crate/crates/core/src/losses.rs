//! Distillation objective terms.
//!
//! Per sample, with `π` the student's rank order and `d` the depth:
//!
//! ```text
//! total = task + α·(pairs + llki) + β·rntk + γ·kd
//! pairs = Σ_{i<j≤d} w_ij · KL(σ₂(t_i, t_j; τ) ‖ σ₂(s_i, s_j; τ))
//! llki  = KL(σ_d(top_t; τ) ‖ σ_d(top_s; τ))
//! rntk  = KL(σ_{C−d}(rest_t; τ) ‖ σ_{C−d}(rest_s; τ))      (0 when C−d < 2)
//! kd    = KL(σ_C(z_t; τ) ‖ σ_C(z_s; τ))                     (vanilla baseline, γ = 0 by default)
//! ```
//!
//! `task` is cross-entropy at temperature 1. Teacher values enter as constants
//! and the rank order is frozen within a step, so gradients flow only through
//! the student's logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{AdwParams, PairSet, PairWeighting};
use crate::ranking::{check_depth, rank_by_student, RankOrder};
use crate::tensor::{add_n, kernels, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    /// Number of top-ranked classes paired densely.
    pub depth: usize,
    /// Softmax temperature for every distillation term.
    pub tau: f64,
    /// Weight of the local terms (pairs + llki).
    pub alpha: f64,
    /// Weight of the remaining non-target term.
    pub beta: f64,
    /// Weight of the full-distribution KD term.
    pub gamma: f64,
    pub adw: AdwParams,
    /// Uniform pair weights when false.
    pub adw_enabled: bool,
    /// Multiply every KL term by τ².
    pub tau_square_scaling: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            depth: 7,
            tau: 4.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            adw: AdwParams::default(),
            adw_enabled: true,
            tau_square_scaling: false,
        }
    }
}

impl DistillConfig {
    /// Checks scalar ranges, and the depth against `classes` when given.
    pub fn validate(&self, classes: Option<usize>) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidTemperature(self.tau));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        self.adw.validate()?;
        match classes {
            Some(c) => check_depth(self.depth, c),
            None if self.depth < 2 => Err(Error::DepthOutOfRange { depth: self.depth, classes: 2 }),
            None => Ok(()),
        }
    }

    pub fn weighting(&self) -> PairWeighting {
        if self.adw_enabled {
            PairWeighting::Adaptive(self.adw)
        } else {
            PairWeighting::Uniform
        }
    }

    fn kl_scale(&self) -> f64 {
        if self.tau_square_scaling {
            self.tau * self.tau
        } else {
            1.0
        }
    }
}

/// Values of each objective term for one sample or a batch mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task: f64,
    pub weighted_pairs: f64,
    pub llki: f64,
    pub rntk: f64,
    pub kd: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Ordered mean; `None` for an empty slice.
    pub fn mean(items: &[LossBreakdown]) -> Option<LossBreakdown> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let mut acc = LossBreakdown::default();
        for b in items {
            acc.task += b.task;
            acc.weighted_pairs += b.weighted_pairs;
            acc.llki += b.llki;
            acc.rntk += b.rntk;
            acc.kd += b.kd;
            acc.total += b.total;
        }
        Some(LossBreakdown {
            task: acc.task / n,
            weighted_pairs: acc.weighted_pairs / n,
            llki: acc.llki / n,
            rntk: acc.rntk / n,
            kd: acc.kd / n,
            total: acc.total / n,
        })
    }
}

/// Graph nodes for each term of one sample's objective.
#[derive(Debug, Clone, Copy)]
pub struct SampleTerms<'t> {
    pub task: Tensor<'t>,
    pub weighted_pairs: Tensor<'t>,
    pub llki: Tensor<'t>,
    pub rntk: Tensor<'t>,
    pub kd: Tensor<'t>,
    pub total: Tensor<'t>,
}

impl SampleTerms<'_> {
    pub fn values(&self) -> LossBreakdown {
        LossBreakdown {
            task: self.task.item(),
            weighted_pairs: self.weighted_pairs.item(),
            llki: self.llki.item(),
            rntk: self.rntk.item(),
            kd: self.kd.item(),
            total: self.total.item(),
        }
    }
}

/// KL(teacher ‖ student) over the masked entries of equally long vectors.
fn masked_kl<'t>(student: Tensor<'t>, teacher: &[f64], mask: &[bool], tau: f64) -> Result<Tensor<'t>> {
    let target = kernels::log_softmax_masked(teacher, mask, tau)?;
    student.log_softmax_masked(mask, tau)?.kl_div(&target, mask)
}

fn full_kl<'t>(student: Tensor<'t>, teacher: &[f64], tau: f64) -> Result<Tensor<'t>> {
    masked_kl(student, teacher, &vec![true; teacher.len()], tau)
}

/// Weighted sum of two-class KLs over every rank pair of the top-d slice.
fn pair_term<'t>(top_s: Tensor<'t>, top_t: &[f64], pairs: &PairSet, tau: f64) -> Result<Tensor<'t>> {
    let d = top_t.len();
    let mut mask = vec![false; d];
    let mut terms = Vec::with_capacity(pairs.len());
    for ((i, j), w) in pairs.iter() {
        mask[i - 1] = true;
        mask[j - 1] = true;
        terms.push(masked_kl(top_s, top_t, &mask, tau)?.scale(w)?);
        mask[i - 1] = false;
        mask[j - 1] = false;
    }
    add_n(&terms)
}

/// Cross-entropy of raw logits against `label`.
pub fn cross_entropy<'t>(logits: Tensor<'t>, label: usize) -> Result<Tensor<'t>> {
    let classes = logits.numel();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    logits.log_softmax_masked(&vec![true; classes], 1.0)?.take(&[label])?.sum()?.scale(-1.0)
}

/// Builds every term of one sample's objective on the student's tape.
///
/// `student` is a length-C vector; `order` is held fixed (no gradient flows
/// through the ranking).
pub fn sample_objective<'t>(
    student: Tensor<'t>,
    teacher: &[f64],
    label: usize,
    order: &RankOrder,
    cfg: &DistillConfig,
) -> Result<SampleTerms<'t>> {
    let classes = student.numel();
    if teacher.len() != classes {
        return Err(Error::LengthMismatch { teacher: teacher.len(), student: classes });
    }
    if order.len() != classes {
        return Err(Error::InvalidParameter(format!(
            "rank order covers {} classes, logits have {classes}",
            order.len()
        )));
    }
    cfg.validate(Some(classes))?;
    let d = cfg.depth;
    let (top_idx, rest_idx) = order.perm().split_at(d);
    let gather = |idx: &[usize]| idx.iter().map(|&i| teacher[i]).collect::<Vec<_>>();
    let scale = cfg.kl_scale();

    let task = cross_entropy(student, label)?;

    let top_s = student.take(top_idx)?;
    let top_t = gather(top_idx);
    let pairs = PairSet::new(d, cfg.weighting())?;
    let weighted_pairs = pair_term(top_s, &top_t, &pairs, cfg.tau)?.scale(scale)?;
    let llki = full_kl(top_s, &top_t, cfg.tau)?.scale(scale)?;

    let rntk = if rest_idx.len() >= 2 {
        full_kl(student.take(rest_idx)?, &gather(rest_idx), cfg.tau)?.scale(scale)?
    } else {
        student.take(&[])?.sum()?
    };
    let kd = full_kl(student, teacher, cfg.tau)?.scale(scale)?;

    let local = weighted_pairs.add(llki)?;
    let total = add_n(&[task, local.scale(cfg.alpha)?, rntk.scale(cfg.beta)?, kd.scale(cfg.gamma)?])?;
    Ok(SampleTerms { task, weighted_pairs, llki, rntk, kd, total })
}

/// Mean objective over a `[B×C]` batch of student logits. Returns the
/// differentiable mean and the mean breakdown.
pub fn batch_objective<'t>(
    logits: Tensor<'t>,
    teacher: &[f64],
    labels: &[usize],
    cfg: &DistillConfig,
) -> Result<(Tensor<'t>, LossBreakdown)> {
    let (rows, classes) = batch_dims(logits, labels)?;
    if teacher.len() != rows * classes {
        return Err(Error::LengthMismatch { teacher: teacher.len(), student: rows * classes });
    }
    let mut totals = Vec::with_capacity(rows);
    let mut parts = Vec::with_capacity(rows);
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r)?;
        let order = rank_by_student(&row.value())?;
        let terms = sample_objective(row, &teacher[r * classes..(r + 1) * classes], label, &order, cfg)?;
        totals.push(terms.total);
        parts.push(terms.values());
    }
    let mean = add_n(&totals)?.scale(1.0 / rows as f64)?;
    let breakdown = LossBreakdown::mean(&parts).expect("non-empty batch");
    Ok((mean, breakdown))
}

/// Mean cross-entropy over a `[B×C]` batch; the breakdown carries only the
/// task term.
pub fn supervised_objective<'t>(logits: Tensor<'t>, labels: &[usize]) -> Result<(Tensor<'t>, LossBreakdown)> {
    let (rows, _) = batch_dims(logits, labels)?;
    let mut terms = Vec::with_capacity(rows);
    for (r, &label) in labels.iter().enumerate() {
        terms.push(cross_entropy(logits.row(r)?, label)?);
    }
    let mean = add_n(&terms)?.scale(1.0 / rows as f64)?;
    let parts: Vec<LossBreakdown> =
        terms.iter().map(|t| LossBreakdown { task: t.item(), total: t.item(), ..Default::default() }).collect();
    Ok((mean, LossBreakdown::mean(&parts).expect("non-empty batch")))
}

fn batch_dims(logits: Tensor<'_>, labels: &[usize]) -> Result<(usize, usize)> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() || shape[0] == 0 {
        return Err(Error::ShapeMismatch {
            op: "batch_objective",
            detail: format!("logits {shape:?} with {} labels", labels.len()),
        });
    }
    Ok((shape[0], shape[1]))
}

fn check_pair_arrays(t: &[f64], s: &[f64]) -> Result<()> {
    if t.len() != s.len() {
        return Err(Error::LengthMismatch { teacher: t.len(), student: s.len() });
    }
    Ok(())
}

/// `Σ pt·ln(pt/ps)` for two-point distributions, with `0·ln(0/q) = 0`.
pub fn kl_two_point(pt: [f64; 2], ps: [f64; 2]) -> Result<f64> {
    for (name, p) in [("teacher", pt), ("student", ps)] {
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) || ((p[0] + p[1]) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("{name} pair {p:?}")));
        }
    }
    let mut kl = 0.0;
    for (t, s) in pt.into_iter().zip(ps) {
        if t == 0.0 {
            continue;
        }
        if s == 0.0 {
            return Err(Error::InfiniteDivergence);
        }
        kl += t * (t / s).ln();
    }
    Ok(kl)
}

/// Weighted pairwise loss over aligned top-d arrays (scaled by τ² when
/// configured).
pub fn pair_loss(top_t: &[f64], top_s: &[f64], cfg: &DistillConfig) -> Result<f64> {
    check_pair_arrays(top_t, top_s)?;
    let d = top_s.len();
    let pairs = PairSet::new(d, cfg.weighting())?;
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(Error::InvalidTemperature(cfg.tau));
    }
    let tape = Tape::new();
    let s = tape.vector(top_s.to_vec(), false)?;
    Ok(pair_term(s, top_t, &pairs, cfg.tau)?.item() * cfg.kl_scale())
}

/// d-way softmax KL over the selected logits.
pub fn llki_loss(top_t: &[f64], top_s: &[f64], tau: f64) -> Result<f64> {
    check_pair_arrays(top_t, top_s)?;
    if top_s.len() < 2 {
        return Err(Error::DepthOutOfRange { depth: top_s.len(), classes: top_s.len() });
    }
    let tape = Tape::new();
    Ok(full_kl(tape.vector(top_s.to_vec(), false)?, top_t, tau)?.item())
}

/// Softmax KL over the remaining classes; zero when fewer than two remain.
pub fn rntk_loss(rest_t: &[f64], rest_s: &[f64], tau: f64) -> Result<f64> {
    check_pair_arrays(rest_t, rest_s)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidTemperature(tau));
    }
    if rest_s.len() < 2 {
        return Ok(0.0);
    }
    let tape = Tape::new();
    Ok(full_kl(tape.vector(rest_s.to_vec(), false)?, rest_t, tau)?.item())
}

/// Full C-way softmax KL at temperature τ.
pub fn vanilla_kd_loss(z_t: &[f64], z_s: &[f64], tau: f64) -> Result<f64> {
    check_pair_arrays(z_t, z_s)?;
    if z_s.len() < 2 {
        return Err(Error::TooFewClasses(z_s.len()));
    }
    let tape = Tape::new();
    Ok(full_kl(tape.vector(z_s.to_vec(), false)?, z_t, tau)?.item())
}

/// Full objective for one sample, ranking by the student's logits.
pub fn ldrld_total(z_t: &[f64], z_s: &[f64], label: usize, cfg: &DistillConfig) -> Result<LossBreakdown> {
    let order = rank_by_student(z_s)?;
    ldrld_total_with_order(z_t, z_s, label, &order, cfg)
}

/// Full objective for one sample under a caller-supplied rank order.
pub fn ldrld_total_with_order(
    z_t: &[f64],
    z_s: &[f64],
    label: usize,
    order: &RankOrder,
    cfg: &DistillConfig,
) -> Result<LossBreakdown> {
    check_pair_arrays(z_t, z_s)?;
    if z_s.len() < 2 {
        return Err(Error::TooFewClasses(z_s.len()));
    }
    let tape = Tape::new();
    let s = tape.vector(z_s.to_vec(), false)?;
    Ok(sample_objective(s, z_t, label, order, cfg)?.values())
}

/// Gradient of the total objective with respect to the student's logits,
/// with the rank order frozen at `order`.
pub fn ldrld_grad_with_order(
    z_t: &[f64],
    z_s: &[f64],
    label: usize,
    order: &RankOrder,
    cfg: &DistillConfig,
) -> Result<Vec<f64>> {
    check_pair_arrays(z_t, z_s)?;
    let tape = Tape::new();
    let s = tape.vector(z_s.to_vec(), true)?;
    let terms = sample_objective(s, z_t, label, order, cfg)?;
    terms.total.backward()?;
    Ok(s.grad().expect("student logits require grad"))
}
