use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the core can report.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A primitive received operands whose extents do not fit together.
    Shape { op: &'static str, detail: String },
    /// A primitive produced NaN or an infinity.
    NonFinite { op: &'static str },
    /// The optimizer was handed a NaN/Inf gradient.
    NonFiniteGradient { param: String },
    /// Seed adjoints do not match the shape of the node they seed.
    AdjointShape {
        expected: alloc::vec::Vec<usize>,
        got: alloc::vec::Vec<usize>,
    },
    /// A scalar argument is outside its admissible range.
    OutOfRange { what: &'static str, value: f64 },
    /// A sampler stratum that must contribute draws is empty.
    EmptyPool { stratum: &'static str },
    /// A transition carries no ground-truth world state and cannot be re-rendered.
    MissingWorldState { episode: u32, step: u32 },
    /// A transition violates a pool or dataset invariant.
    InvalidTransition(String),
    /// Parameter containers disagree on names or shapes.
    Parameters(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape mismatch in `{op}`: {detail}"),
            Error::NonFinite { op } => write!(f, "non-finite value produced by `{op}`"),
            Error::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient for parameter `{param}`")
            }
            Error::AdjointShape { expected, got } => {
                write!(f, "seed adjoint has shape {got:?}, expected {expected:?}")
            }
            Error::OutOfRange { what, value } => write!(f, "{what} out of range: {value}"),
            Error::EmptyPool { stratum } => write!(f, "required stratum `{stratum}` is empty"),
            Error::MissingWorldState { episode, step } => write!(
                f,
                "transition (episode {episode}, step {step}) has no world state; cannot relight"
            ),
            Error::InvalidTransition(msg) => write!(f, "invalid transition: {msg}"),
            Error::Parameters(msg) => write!(f, "parameter mismatch: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
