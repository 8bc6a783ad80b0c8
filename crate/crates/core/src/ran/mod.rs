//! Region Attention Network head.
//!
//! Given region features `F_0..F_k` (index 0 is the uncropped face):
//!
//! ```text
//! mu_i  = sigmoid(F_i . q0)
//! F_m   = sum(mu_i F_i) / sum(mu_i)
//! nu_i  = sigmoid([F_i : F_m] . q1)
//! P_RAN = sum(mu_i nu_i [F_i : F_m]) / sum(mu_i nu_i)
//! ```
//!
//! `P_RAN` feeds a linear classifier. The region biased loss
//! `max(0, alpha - (max_{i>=1} mu_i - mu_0))` is added to cross-entropy.

mod attention;
mod baselines;
mod check;
mod loss;
mod model;

pub use attention::{
    forward, relation_attention, self_attention, weighted_aggregate, AttentionState, RanParams,
    NORMALIZER_EPS,
};
pub use baselines::{baseline_average_pool, baseline_concat, baseline_score_fusion};
pub use check::{gradcheck_cases, run_gradcheck_case, GradCheckCase, GradCheckOutcome};
pub use loss::{batch_total_loss, rb_loss, rb_loss_grad, total_loss};
pub(crate) use model::argmax;
pub use model::{BackboneKind, HeadKind, Model, ModelConfig, Prediction, SampleLoss};
