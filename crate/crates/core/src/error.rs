use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree on shape.
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Operand has the wrong rank (e.g. backward on a non-scalar).
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    /// Batch statistics need at least two rows.
    InsufficientBatch { op: &'static str, rows: usize },
    /// A scalar parameter is outside its valid range.
    Parameter { name: &'static str, value: f64 },
    /// A computation produced non-finite values.
    Numeric(String),
    /// A metric is undefined for the given input (e.g. no comparable pairs).
    UndefinedMetric(&'static str),
    /// Training loss went non-finite; carries the per-term values.
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        clean: f64,
        sdir: f64,
        kl: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => {
                write!(f, "{op}: dimension mismatch between {left:?} and {right:?}")
            }
            Error::Rank {
                op,
                expected,
                shape,
            } => write!(f, "{op}: expected rank {expected}, got shape {shape:?}"),
            Error::InsufficientBatch { op, rows } => {
                write!(f, "{op}: batch statistics need at least 2 rows, got {rows}")
            }
            Error::Parameter { name, value } => write!(f, "parameter {name} out of range: {value}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::UndefinedMetric(what) => write!(f, "undefined metric: {what}"),
            Error::NonFiniteLoss {
                epoch,
                step,
                clean,
                sdir,
                kl,
            } => write!(
                f,
                "non-finite loss at epoch {epoch} step {step}: clean={clean} sdir={sdir} kl={kl}"
            ),
        }
    }
}

impl core::error::Error for Error {}
