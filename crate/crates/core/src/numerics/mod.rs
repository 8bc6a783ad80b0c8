//! Minimal differentiable computation core.
//!
//! Everything is `f64`. Backward passes are hand-derived per primitive and
//! checked against [`finite_diff_grad`] rather than produced by a tape.

mod checkpoint;
mod gradcheck;
mod ops;
mod optim;
mod param;
mod tensor;

pub use checkpoint::{
    decode as decode_checkpoint, encode as encode_checkpoint, read_checkpoint, write_checkpoint,
    CheckpointEntry, CHECKPOINT_MAGIC,
};
pub use gradcheck::{compare_gradients, finite_diff_grad, GradCheckReport, DEFAULT_EPSILON};
pub use ops::{
    affine, affine_backward, log_softmax, relu, sigmoid, sigmoid_derivative, softmax,
    softmax_cross_entropy, softmax_cross_entropy_with_grad,
};
pub use optim::{LrSchedule, Sgd};
pub use param::{Grads, ParamId, ParamSet, ParamShape, Parameter};
pub use tensor::{RealMatrix, RealVector};

pub(crate) use ops::affine_into;
pub(crate) use tensor::{axpy, dot};
