use alloc::boxed::Box;
use core::fmt;

use crate::trainer::WeightMatrix;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix did not have the expected length.
    DimensionMismatch { expected: usize, found: usize },
    /// Two collections that must be parallel have different lengths.
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A class has too few members for the requested neighbour counts.
    InsufficientClassPopulation { class: u32, have: usize, need: usize },
    InvalidLabel { index: usize, label: u32, classes: usize },
    EmptyClass(u32),
    NonFinite { row: usize, col: usize },
    /// Argument outside the function's domain.
    Domain(&'static str),
    InvalidConfig(&'static str),
    InvalidTriplet { index: usize, reason: &'static str },
    Empty(&'static str),
    /// The primal solver hit its iteration limit. Carries the last iterate.
    NonConvergence {
        iterations: usize,
        objective: f64,
        gradient_norm: f64,
        weights: Box<WeightMatrix>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::SizeMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected} entries, found {found}"),
            Error::InsufficientClassPopulation { class, have, need } => write!(
                f,
                "insufficient class population: class {class} has {have} samples, needs {need}"
            ),
            Error::InvalidLabel {
                index,
                label,
                classes,
            } => write!(
                f,
                "label {label} at index {index} outside 1..={classes}"
            ),
            Error::EmptyClass(c) => write!(f, "class {c} has no samples"),
            Error::NonFinite { row, col } => {
                write!(f, "non-finite value at row {row}, column {col}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidTriplet { index, reason } => {
                write!(f, "invalid triplet {index}: {reason}")
            }
            Error::Empty(what) => write!(f, "empty {what}"),
            Error::NonConvergence {
                iterations,
                objective,
                gradient_norm,
                ..
            } => write!(
                f,
                "primal solve did not converge after {iterations} iterations \
                 (objective {objective}, projected gradient {gradient_norm:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}
