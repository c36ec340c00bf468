//! Dense `f64` tensor math with hand-written reverse-mode gradients for the
//! layers the models need, plus Adam and a finite-difference checker.

mod adam;
mod gradcheck;
mod gru;
mod linear;
pub mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use gru::{Gru, GruStep};
pub use linear::Linear;
pub use params::{ParamId, ParamSet};
pub use tensor::{gemm, MatMut, MatRef, Tensor};
