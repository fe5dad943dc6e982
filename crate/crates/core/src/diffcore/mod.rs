//! Differentiable primitives, the reverse-mode tape and the
//! finite-difference gradient oracle.

mod fastmath;
mod gradcheck;
mod kernels;
mod rng;
mod scalar;
mod suite;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, grad_check_with, GradCheckReport};
pub use rng::Rng;
pub use scalar::Scalar;
pub use suite::{check_primitive, primitive_suite, OpCheck};
pub use tape::{Mode, OpKind, Tape, Var};
pub use tensor::Tensor;

/// Default epsilon for [`Tape::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;
