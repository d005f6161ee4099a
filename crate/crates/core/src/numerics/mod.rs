//! Dense matrices, a small reverse-mode autodiff graph and a
//! finite-difference gradient checker.

mod gradcheck;
mod graph;
mod matrix;
mod ops;

pub use gradcheck::{check_gradient, relative_error, BlockReport, GradCheckConfig, GradReport};
pub use graph::{linear, Gradients, Graph, Var};
pub use matrix::Matrix;
pub use ops::{dilated_conv1d, softmax_rows, ConvShape};
