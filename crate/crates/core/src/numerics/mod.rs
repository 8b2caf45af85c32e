//! Dense double-precision tensors, a reverse-mode tape and a
//! finite-difference gradient checker.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    analytic_gradients, grad_check, grad_check_against, relative_error, GradCheckEntry, GradCheckReport,
    REL_ERROR_FLOOR,
};
pub use tape::{softmax, Gradients, Tape, Var};
pub use tensor::Tensor;


#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of range for shape {shape:?}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        shape: Vec<usize>,
    },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{0}: no inputs")]
    EmptyInput(&'static str),
    #[error("{op}: argument {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("backward requires a one-element loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value {value} ({context})")]
    NonFinite { context: String, value: f64 },
    #[error("{0}")]
    InvalidArgument(String),
}
