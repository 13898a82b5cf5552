//! Minimal reverse-mode automatic differentiation over the operators a
//! small U-Net needs: same-size convolution, ReLU, 2x pooling, nearest
//! upsampling, channel concatenation, elementwise arithmetic and squared
//! norms.

mod gradcheck;
mod kernels;
mod tape;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use tape::{Tape, Tensor, Var};
