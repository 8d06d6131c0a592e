//! Student-driven rank order and the top-d / remaining split.
//!
//! Both roles are read through one permutation computed from the student's
//! logits, so rank `r` refers to the same class for teacher and student. The
//! extract-max-then-exclude recursion reduces to a single stable argsort; the
//! literal recursion lives in [`crate::oracle`] as a test reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankSource {
    Student,
    /// Teacher-sorted order. Diagnostics only; never used by the objective.
    Teacher,
}

/// Class indices in descending logit order, ties broken by lower index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankOrder {
    perm: Vec<usize>,
    source: RankSource,
}

impl RankOrder {
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn source(&self) -> RankSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Class index at 1-based rank `r`.
    pub fn class_at(&self, r: usize) -> Option<usize> {
        r.checked_sub(1).and_then(|i| self.perm.get(i).copied())
    }
}

fn descending_argsort(z: &[f64], source: RankSource) -> Result<RankOrder> {
    if z.len() < 2 {
        return Err(Error::TooFewClasses(z.len()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("logits must be finite".into()));
    }
    let mut perm: Vec<usize> = (0..z.len()).collect();
    // finite values, so partial_cmp never fails; stable sort keeps lower index first on ties
    perm.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).expect("finite"));
    Ok(RankOrder { perm, source })
}

/// Descending argsort of the student's logits.
pub fn rank_by_student(z_s: &[f64]) -> Result<RankOrder> {
    descending_argsort(z_s, RankSource::Student)
}

/// Teacher-sorted order for comparing against the student-driven objective.
#[cfg(any(test, feature = "diagnostics"))]
pub fn rank_by_teacher(z_t: &[f64]) -> Result<RankOrder> {
    descending_argsort(z_t, RankSource::Teacher)
}

/// Teacher and student logits at the first `depth` ranks and at the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct TopSplit {
    pub depth: usize,
    pub top_t: Vec<f64>,
    pub top_s: Vec<f64>,
    pub rest_t: Vec<f64>,
    pub rest_s: Vec<f64>,
    /// Class index of each top rank.
    pub top_classes: Vec<usize>,
    /// Class index of each remaining rank.
    pub rest_classes: Vec<usize>,
}

pub(crate) fn check_depth(depth: usize, classes: usize) -> Result<()> {
    if depth < 2 || depth > classes {
        return Err(Error::DepthOutOfRange { depth, classes });
    }
    Ok(())
}

/// Reads both logit vectors through `order` and cuts after `depth` ranks.
pub fn split_top_d(z_t: &[f64], z_s: &[f64], order: &RankOrder, depth: usize) -> Result<TopSplit> {
    if z_t.len() != z_s.len() {
        return Err(Error::LengthMismatch { teacher: z_t.len(), student: z_s.len() });
    }
    if order.len() != z_s.len() {
        return Err(Error::InvalidParameter(format!(
            "rank order covers {} classes, logits have {}",
            order.len(),
            z_s.len()
        )));
    }
    check_depth(depth, z_s.len())?;
    let (top, rest) = order.perm.split_at(depth);
    let gather = |z: &[f64], idx: &[usize]| idx.iter().map(|&i| z[i]).collect::<Vec<_>>();
    Ok(TopSplit {
        depth,
        top_t: gather(z_t, top),
        top_s: gather(z_s, top),
        rest_t: gather(z_t, rest),
        rest_s: gather(z_s, rest),
        top_classes: top.to_vec(),
        rest_classes: rest.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn argsort_simple() {
        assert_eq!(rank_by_student(&[0.1, 3.0, 2.0]).unwrap().perm(), &[1, 2, 0]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(rank_by_student(&[5.0, 5.0, 1.0]).unwrap().perm(), &[0, 1, 2]);
        assert_eq!(rank_by_student(&[1.0, 5.0, 5.0, 5.0]).unwrap().perm(), &[1, 2, 3, 0]);
        assert_eq!(rank_by_student(&[0.0, -0.0]).unwrap().perm(), &[0, 1]);
    }

    #[test]
    fn rejects_single_class() {
        assert_eq!(rank_by_student(&[1.0]).unwrap_err(), Error::TooFewClasses(1));
    }

    #[test]
    fn split_direct_indexing() {
        let z_s = [4.0, 3.0, 2.0, 1.0];
        let z_t = [1.0, 2.0, 3.0, 4.0];
        let order = rank_by_student(&z_s).unwrap();
        let s = split_top_d(&z_t, &z_s, &order, 2).unwrap();
        assert_eq!(s.top_s, vec![4.0, 3.0]);
        assert_eq!(s.top_t, vec![1.0, 2.0]);
        assert_eq!(s.rest_s, vec![2.0, 1.0]);
        assert_eq!(s.rest_t, vec![3.0, 4.0]);
    }

    #[test]
    fn full_depth_leaves_rest_empty() {
        let z = [0.3, -1.0, 2.0];
        let order = rank_by_student(&z).unwrap();
        let s = split_top_d(&z, &z, &order, 3).unwrap();
        assert!(s.rest_t.is_empty() && s.rest_s.is_empty());
    }

    #[test]
    fn depth_out_of_range() {
        let z = [0.3, -1.0, 2.0];
        let order = rank_by_student(&z).unwrap();
        assert_eq!(split_top_d(&z, &z, &order, 1).unwrap_err(), Error::DepthOutOfRange { depth: 1, classes: 3 });
        assert_eq!(split_top_d(&z, &z, &order, 4).unwrap_err(), Error::DepthOutOfRange { depth: 4, classes: 3 });
    }

    #[test]
    fn teacher_order_is_diagnostic_only() {
        let z_t = [0.0, 1.0, 2.0];
        let order = rank_by_teacher(&z_t).unwrap();
        assert_eq!(order.source(), RankSource::Teacher);
        assert_eq!(order.perm(), &[2, 1, 0]);
    }

    proptest! {
        #[test]
        fn perm_is_permutation_and_sorted(z in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let order = rank_by_student(&z).unwrap();
            let mut seen = order.perm().to_vec();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..z.len()).collect::<Vec<_>>());
            for w in order.perm().windows(2) {
                prop_assert!(z[w[0]] >= z[w[1]]);
            }
        }

        #[test]
        fn split_partitions_classes(z in prop::collection::vec(-5.0f64..5.0, 2..30), frac in 0.0f64..1.0) {
            let c = z.len();
            let d = 2 + ((c - 2) as f64 * frac) as usize;
            let order = rank_by_student(&z).unwrap();
            let s = split_top_d(&z, &z, &order, d).unwrap();
            let mut all: Vec<usize> = s.top_classes.iter().chain(&s.rest_classes).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..c).collect::<Vec<_>>());
            for w in s.top_s.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
