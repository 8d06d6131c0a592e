//! Rank-pair enumeration over the top-d logits and the adaptive decay weights
//! attached to each pair.
//!
//! Ranks are 1-based positions inside the top-d selection, not class indices.
//! Weights are constants with respect to differentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the adaptive decay weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdwParams {
    /// Offset inside the inverse-rank term; keeps the denominator positive.
    pub epsilon: f64,
    /// Scale of the exponential rank decay.
    pub delta: f64,
    /// Decay rate of the exponential rank decay.
    pub lambda: f64,
}

impl Default for AdwParams {
    fn default() -> Self {
        Self { epsilon: 1.5, delta: 2.0, lambda: 0.05 }
    }
}

impl AdwParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.epsilon) && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(ok(self.delta) && self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(ok(self.lambda) && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// All rank pairs `(i, j)` with `1 <= i < j <= depth`, in the order the
/// recursive construction adds them: each new rank `j` is paired with every
/// earlier rank, so the list reads (1,2); (1,3),(2,3); (1,4),(2,4),(3,4); ...
pub fn generate_pairs(depth: usize) -> Result<Vec<(usize, usize)>> {
    if depth < 2 {
        return Err(Error::DepthOutOfRange { depth, classes: depth.max(2) });
    }
    let mut pairs = Vec::with_capacity(depth * (depth - 1) / 2);
    for j in 2..=depth {
        pairs.extend((1..j).map(|i| (i, j)));
    }
    Ok(pairs)
}

/// Inverse rank weighting: `1 / (|r2 − r1| + ε)`.
pub fn irw(r1: usize, r2: usize, p: &AdwParams) -> Result<f64> {
    if r1 == 0 || r2 == 0 || r1 == r2 {
        return Err(Error::InvalidRankPair(r1, r2));
    }
    Ok(1.0 / (r1.abs_diff(r2) as f64 + p.epsilon))
}

/// Exponential rank decay: `δ · exp(−λ (r1 + r2))`.
pub fn erd(r1: usize, r2: usize, p: &AdwParams) -> Result<f64> {
    if r1 == 0 || r2 == 0 {
        return Err(Error::InvalidRankPair(r1, r2));
    }
    Ok(p.delta * (-p.lambda * (r1 + r2) as f64).exp())
}

/// Adaptive decay weight, the product of [`irw`] and [`erd`].
pub fn adw(r1: usize, r2: usize, p: &AdwParams) -> Result<f64> {
    Ok(irw(r1, r2, p)? * erd(r1, r2, p)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairWeighting {
    Adaptive(AdwParams),
    /// Every pair weighs 1.
    Uniform,
}

/// Rank pairs over the top-d selection with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl PairSet {
    pub fn new(depth: usize, weighting: PairWeighting) -> Result<Self> {
        let pairs = generate_pairs(depth)?;
        let weights = match weighting {
            PairWeighting::Adaptive(p) => {
                p.validate()?;
                pairs.iter().map(|&(i, j)| adw(i, j, &p)).collect::<Result<Vec<_>>>()?
            }
            PairWeighting::Uniform => vec![1.0; pairs.len()],
        };
        Ok(Self { pairs, weights })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.pairs.iter().copied().zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    const P: AdwParams = AdwParams { epsilon: 1.5, delta: 2.0, lambda: 0.05 };

    #[test]
    fn base_and_first_recursion_step() {
        assert_eq!(generate_pairs(2).unwrap(), vec![(1, 2)]);
        assert_eq!(generate_pairs(3).unwrap(), vec![(1, 2), (1, 3), (2, 3)]);
        assert_eq!(generate_pairs(4).unwrap()[3..], [(1, 4), (2, 4), (3, 4)]);
    }

    #[test]
    fn depth_seven_matches_double_loop() {
        let got: BTreeSet<_> = generate_pairs(7).unwrap().into_iter().collect();
        let mut want = BTreeSet::new();
        for i in 1..=7 {
            for j in 1..=7 {
                if i < j {
                    want.insert((i, j));
                }
            }
        }
        assert_eq!(got.len(), 21);
        assert_eq!(got, want);
    }

    #[test]
    fn pair_counts() {
        for d in 2..=30 {
            assert_eq!(generate_pairs(d).unwrap().len(), d * (d - 1) / 2);
        }
        assert!(generate_pairs(1).is_err());
        assert!(generate_pairs(0).is_err());
    }

    #[test]
    fn irw_values() {
        assert!((irw(1, 2, &P).unwrap() - 0.4).abs() < 1e-15);
        assert!((irw(1, 4, &P).unwrap() - 1.0 / 4.5).abs() < 1e-15);
        assert_eq!(irw(3, 9, &P).unwrap(), irw(9, 3, &P).unwrap());
        assert_eq!(irw(2, 2, &P).unwrap_err(), Error::InvalidRankPair(2, 2));
        assert!(irw(0, 2, &P).is_err());
    }

    #[test]
    fn erd_values() {
        assert!((erd(1, 2, &P).unwrap() - 1.721_416_4).abs() < 1e-6);
        let flat = AdwParams { lambda: 0.0, ..P };
        assert_eq!(erd(1, 2, &flat).unwrap(), 2.0);
        assert_eq!(erd(17, 30, &flat).unwrap(), 2.0);
        assert!(erd(12, 13, &P).unwrap() < erd(1, 2, &P).unwrap());
    }

    #[test]
    fn adw_values() {
        let w = adw(1, 2, &P).unwrap();
        assert!((w - 0.4 * 2.0 * (-0.15f64).exp()).abs() < 1e-15);
        assert!((w - 0.688_566).abs() < 1e-6);
        let far = adw(12, 13, &P).unwrap();
        assert_eq!(irw(1, 2, &P).unwrap(), irw(12, 13, &P).unwrap());
        assert!((w / far - (1.1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights() {
        let set = PairSet::new(5, PairWeighting::Uniform).unwrap();
        assert!(set.weights().iter().all(|&w| w == 1.0));
        assert_eq!(set.len(), 10);
    }

    #[test]
    fn adw_weights_stay_positive_for_large_ranks() {
        for r in 1..1000 {
            let w = adw(r, r + 1, &P).unwrap();
            assert!(w > 0.0 && w.is_finite(), "rank {r}: {w}");
            let w = adw(1, r + 1, &P).unwrap();
            assert!(w > 0.0 && w.is_finite());
        }
    }

    #[test]
    fn invalid_params() {
        assert!(AdwParams { epsilon: 0.0, ..P }.validate().is_err());
        assert!(AdwParams { delta: -1.0, ..P }.validate().is_err());
        assert!(AdwParams { lambda: -0.1, ..P }.validate().is_err());
        assert!(AdwParams { lambda: 0.0, ..P }.validate().is_ok());
    }
}
