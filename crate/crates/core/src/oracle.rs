//! Reference implementations used as ground truth by the test suites and the
//! `losscheck` command.
//!
//! Nothing here calls into [`crate::tensor`], [`crate::losses`] or the ranking
//! and pair-weighting functions; only plain data types are shared. The code
//! follows the objective term by term and favours legibility over speed.

use crate::error::{Error, Result};
use crate::losses::DistillConfig;
use crate::ranking::TopSplit;

/// Ranking by repeated selection of the largest remaining value; the first
/// occurrence wins ties.
pub fn selection_sort_ranking(z: &[f64]) -> Vec<usize> {
    let mut taken = vec![false; z.len()];
    let mut order = Vec::with_capacity(z.len());
    for _ in 0..z.len() {
        let mut best: Option<usize> = None;
        for i in 0..z.len() {
            if taken[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if z[i] > z[b] => best = Some(i),
                _ => {}
            }
        }
        let b = best.expect("an untaken entry remains");
        taken[b] = true;
        order.push(b);
    }
    order
}

/// Top-d selection by the literal extract-maximum-then-exclude loop. The
/// exclusion set plays the role of the −∞ mask; the loop continues past `d` to
/// list the remaining ranks in order.
pub fn oracle_topd_recursive(z_t: &[f64], z_s: &[f64], d: usize) -> Result<TopSplit> {
    let c = z_s.len();
    if z_t.len() != c {
        return Err(Error::LengthMismatch { teacher: z_t.len(), student: c });
    }
    if d < 2 || d > c {
        return Err(Error::DepthOutOfRange { depth: d, classes: c });
    }
    let mut excluded = vec![false; c];
    let mut picked = Vec::with_capacity(c);
    for _ in 0..c {
        let mut i_max = usize::MAX;
        let mut v_max = f64::NEG_INFINITY;
        for i in 0..c {
            if !excluded[i] && (i_max == usize::MAX || z_s[i] > v_max) {
                i_max = i;
                v_max = z_s[i];
            }
        }
        excluded[i_max] = true;
        picked.push(i_max);
    }
    let top: Vec<usize> = picked[..d].to_vec();
    let rest: Vec<usize> = picked[d..].to_vec();
    Ok(TopSplit {
        depth: d,
        top_t: top.iter().map(|&i| z_t[i]).collect(),
        top_s: top.iter().map(|&i| z_s[i]).collect(),
        rest_t: rest.iter().map(|&i| z_t[i]).collect(),
        rest_s: rest.iter().map(|&i| z_s[i]).collect(),
        top_classes: top,
        rest_classes: rest,
    })
}

fn softmax_direct(z: &[f64], tau: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn kl_direct(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..p.len() {
        if p[k] > 0.0 {
            s += p[k] * (p[k] / q[k]).ln();
        }
    }
    s
}

/// Total objective evaluated term by term with no shared production code.
pub fn oracle_ldrld(z_t: &[f64], z_s: &[f64], label: usize, cfg: &DistillConfig) -> Result<f64> {
    let split = oracle_topd_recursive(z_t, z_s, cfg.depth)?;
    oracle_ldrld_split(z_t, z_s, label, &split, cfg)
}

/// [`oracle_ldrld`] with the top/rest split supplied by the caller.
pub fn oracle_ldrld_split(
    z_t: &[f64],
    z_s: &[f64],
    label: usize,
    split: &TopSplit,
    cfg: &DistillConfig,
) -> Result<f64> {
    let c = z_s.len();
    if label >= c {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let tau = cfg.tau;
    let d = split.depth;
    let scale = if cfg.tau_square_scaling { tau * tau } else { 1.0 };

    let task = -softmax_direct(z_s, 1.0)[label].ln();

    let mut pairs = 0.0;
    for i in 1..d {
        for j in (i + 1)..=d {
            let (ti, tj) = ((split.top_t[i - 1] / tau).exp(), (split.top_t[j - 1] / tau).exp());
            let (si, sj) = ((split.top_s[i - 1] / tau).exp(), (split.top_s[j - 1] / tau).exp());
            let pt = [ti / (ti + tj), tj / (ti + tj)];
            let ps = [si / (si + sj), sj / (si + sj)];
            let w = if cfg.adw_enabled {
                let a = &cfg.adw;
                let gap = (j as f64 - i as f64).abs();
                (1.0 / (gap + a.epsilon)) * a.delta * (-a.lambda * (i + j) as f64).exp()
            } else {
                1.0
            };
            pairs += w * (pt[0] * (pt[0] / ps[0]).ln() + pt[1] * (pt[1] / ps[1]).ln());
        }
    }
    pairs *= scale;

    let llki = scale * kl_direct(&softmax_direct(&split.top_t, tau), &softmax_direct(&split.top_s, tau));
    let rntk = if c - d >= 2 {
        scale * kl_direct(&softmax_direct(&split.rest_t, tau), &softmax_direct(&split.rest_s, tau))
    } else {
        0.0
    };
    let kd = scale * kl_direct(&softmax_direct(z_t, tau), &softmax_direct(z_s, tau));

    Ok(task + cfg.alpha * (pairs + llki) + cfg.beta * rntk + cfg.gamma * kd)
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn fd_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe);
        probe[k] = x[k] - h;
        let down = f(&probe);
        probe[k] = x[k];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite("fd_gradient"));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}
