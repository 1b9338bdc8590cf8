//! Crate-wide error type.
//!
//! Parameter-domain violations carry the offending name and value so a
//! caller can report them without re-deriving context.  Numerical
//! failures (singular systems, residuals above tolerance, non-finite
//! values) carry the time-step index at which they occurred.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar argument fell outside its admissible range.
    ParamDomain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    /// An (n, j) style index pair was outside the table/mesh range.
    IndexOutOfRange { name: &'static str, index: usize, max: usize },
    /// A kernel table violated one of its construction invariants.
    KernelInvariant { n: usize, j: usize, what: &'static str },
    /// Two containers that must agree in shape did not.
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    /// The Mittag-Leffler series was called with a negative argument.
    MittagLefflerNegative { z: f64 },
    /// The Mittag-Leffler value exceeds the representable range.
    MittagLefflerOverflow { z: f64 },
    /// A domain straddles x = 0 or y = 0 but the subdivision count
    /// along that axis is odd, so no mesh line lies on the axis.
    OddSubdivision { axis: &'static str, count: usize },
    /// A manufactured profile was evaluated on one of its kink lines.
    KinkLine { x: f64, y: f64 },
    /// A linear system factorization broke down.
    Singular { step: usize, detail: &'static str },
    /// A step's linear solve finished with residual above tolerance.
    ResidualTooLarge { step: usize, residual: f64 },
    /// A non-finite value appeared in the trajectory.
    NonFinite { step: usize },
    /// Free-form configuration error (CLI-facing).
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ParamDomain { name, value, constraint } => {
                write!(f, "parameter {name} = {value} violates {constraint}")
            }
            Error::IndexOutOfRange { name, index, max } => {
                write!(f, "index {name} = {index} out of range (max {max})")
            }
            Error::KernelInvariant { n, j, what } => {
                write!(f, "kernel invariant violated at (n, j) = ({n}, {j}): {what}")
            }
            Error::ShapeMismatch { what, expected, got } => {
                write!(f, "shape mismatch for {what}: expected {expected}, got {got}")
            }
            Error::MittagLefflerNegative { z } => {
                write!(f, "Mittag-Leffler argument {z} is negative")
            }
            Error::MittagLefflerOverflow { z } => {
                write!(f, "Mittag-Leffler value overflows at argument {z}")
            }
            Error::OddSubdivision { axis, count } => {
                write!(
                    f,
                    "domain straddles {axis} = 0 but {count} subdivisions put no mesh line there"
                )
            }
            Error::KinkLine { x, y } => {
                write!(f, "manufactured profile evaluated on a kink line at ({x}, {y})")
            }
            Error::Singular { step, detail } => {
                write!(f, "factorization failure at step {step}: {detail}")
            }
            Error::ResidualTooLarge { step, residual } => {
                write!(f, "step {step} linear solve residual {residual:e} above tolerance")
            }
            Error::NonFinite { step } => write!(f, "non-finite value at step {step}"),
            Error::Config(msg) => write!(f, "{msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
