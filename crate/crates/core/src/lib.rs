//! Local dense relational logit distillation.
//!
//! The student's logits fix a rank order; the top `d` classes are paired
//! densely and each pair contributes a two-class KL weighted by its rank
//! positions. A d-way KL over the selected classes and a KL over the remaining
//! classes complete the objective.
//!
//! - [`tensor`]: dense f64 tensors on a reverse-mode tape.
//! - [`ranking`]: student rank order and top-d split.
//! - [`pairs`]: rank-pair enumeration and adaptive decay weights.
//! - [`losses`]: every objective term and the batch objective.
//! - [`oracle`]: independent brute-force references for tests.

pub mod error;
pub mod losses;
pub mod oracle;
pub mod pairs;
pub mod ranking;
pub mod tensor;

pub use error::{Error, Result};
pub use losses::{DistillConfig, LossBreakdown};
pub use pairs::{AdwParams, PairSet, PairWeighting};
pub use ranking::{rank_by_student, split_top_d, RankOrder, TopSplit};
pub use tensor::{Tape, Tensor};
