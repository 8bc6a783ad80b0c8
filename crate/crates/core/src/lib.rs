//! Region Attention Networks (RAN) for occlusion- and pose-robust facial
//! expression recognition.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense vectors, the few differentiable primitives the head
//!   needs, SGD with momentum, a finite-difference gradient oracle and the
//!   binary parameter container.
//! * [`regions`]: fixed, random and landmark region generation plus bilinear
//!   crop/resize and PGM/PPM I/O.
//! * [`features`]: the shared backbone, either a frozen feature store or a
//!   trainable two-layer projection.
//! * [`ran`]: self-attention, relation-attention, region biased loss and the
//!   fusion baselines.
//! * [`pipeline`]: training loop, evaluation, attention reports and sweeps.
//! * [`datasets`]: manifests, occlusion/pose subsets and the synthetic
//!   localization task.

pub mod datasets;
pub mod error;
pub mod features;
pub mod numerics;
pub mod pipeline;
pub mod ran;
pub mod regions;

pub use error::{Error, Result};
pub use numerics::{ParamSet, Parameter, RealMatrix, RealVector};
pub use ran::{AttentionState, HeadKind, Model};
pub use regions::{CropScheme, FaceImage, RegionSpec};
