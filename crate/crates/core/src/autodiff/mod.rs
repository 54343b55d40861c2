//! Reverse-mode automatic differentiation over small dense `f64` tensors.
//!
//! A [`Tape`] records an eager forward pass. Parameters live outside the tape
//! in a [`ParamSet`] and are only borrowed, so several tapes can read the same
//! parameters while none of them is being updated. [`Tape::backward`] returns
//! [`Gradients`] aligned with the parameter set, which [`Adam`] consumes.

mod adam;
mod tape;
mod tensor;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use adam::{Adam, AdamConfig};
pub use tape::{Tape, Var};
pub(crate) use tape::softmax as tape_softmax;
pub use tensor::{Gradients, ParamId, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum AutodiffError {
    ShapeMismatch { op: &'static str, shapes: Vec<Vec<usize>> },
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    /// An op produced NaN or an infinity.
    NonFinite { op: &'static str },
    NonFiniteGradient { param: String },
    NotScalar { shape: Vec<usize> },
    DuplicateParam(String),
}

impl fmt::Display for AutodiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutodiffError::ShapeMismatch { op, shapes } => write!(f, "{op}: incompatible shapes {shapes:?}"),
            AutodiffError::IndexOutOfRange { op, index, len } => {
                write!(f, "{op}: index {index} out of range for length {len}")
            }
            AutodiffError::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            AutodiffError::NonFiniteGradient { param } => write!(f, "non-finite gradient for parameter {param}"),
            AutodiffError::NotScalar { shape } => write!(f, "backward needs a scalar output, got shape {shape:?}"),
            AutodiffError::DuplicateParam(name) => write!(f, "parameter {name} registered twice"),
        }
    }
}
