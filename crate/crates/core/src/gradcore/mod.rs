//! Reverse-mode differentiation over the handful of matrix operations the
//! training objective needs, with stop-gradient and straight-through
//! quantization nodes, finite-difference checking and plain SGD.

mod check;
mod tape;

pub use check::{fd_check, relative_error, ScalarFunction, Sgd, TapeFunction};
pub use tape::{log_sum_exp, Gradients, NodeId, Tape};
