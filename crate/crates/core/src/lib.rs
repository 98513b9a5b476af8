//! Polarization-based face anti-spoofing.
//!
//! The pipeline runs from a raw polarization filter array frame to a liveness
//! score:
//!
//! 1. [`polar`]: demosaic the PFA frame, form Stokes components and the DOLP map.
//! 2. [`embed`]: map a DOLP crop to an embedding with a Siamese-trained CNN.
//! 3. [`svm`]: score the embedding with a linear SVM.
//! 4. [`eval`]: ROC, EER and TPR at fixed FPR over labeled scores.
//!
//! [`synth`] renders labeled datasets of synthetic polarized scenes, and
//! [`features`] provides the handcrafted baselines (moment statistics, LBP).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod imageio;
pub mod plane;
pub mod polar;
pub mod seed;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use plane::{Plane, Rect};
