//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::dyadic::DyadicIndex;

/// Everything that can go wrong while building or transforming weights.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A split (left-half mass fraction) left its admissible open interval.
    #[error("split {value} at level {level}, position {pos} outside ({floor}, {})", 1.0 - floor)]
    SplitOutOfRange {
        level: u32,
        pos: u64,
        value: f64,
        floor: f64,
    },

    /// A tree depth outside the supported range.
    #[error("depth {depth} outside [{min}, {max}]")]
    DepthOutOfRange { depth: u32, min: u32, max: u32 },

    /// Wrong number of splits or coefficients for the declared depth.
    #[error("expected {expected} entries for depth {depth}, got {got}")]
    LengthMismatch {
        depth: u32,
        expected: usize,
        got: usize,
    },

    /// A dyadic index deeper than the structure it addresses.
    #[error("index at level {level} exceeds depth {depth}")]
    LevelOutOfRange { level: u32, depth: u32 },

    /// Two structures that must share a depth do not.
    #[error("depth mismatch: {left} vs {right}")]
    DepthMismatch { left: u32, right: u32 },

    /// A position that does not exist at its level.
    #[error("position {pos} invalid at level {level} (must be < 2^level)")]
    BadIndex { level: u32, pos: u64 },

    /// The same dyadic index appeared twice in one collection.
    #[error("duplicate entry for level {level}, position {pos}")]
    DuplicateIndex { level: u32, pos: u64 },

    /// Exhaustive subset expansion requested for too many factors.
    #[error("expansion over subsets limited to {max} factors, got {n}")]
    SizeLimit { n: usize, max: usize },

    /// Interval comparison requires one interval inside the other.
    #[error("interval ({inner_level},{inner_pos}) is not contained in ({outer_level},{outer_pos})")]
    NotNested {
        inner_level: u32,
        inner_pos: u64,
        outer_level: u32,
        outer_pos: u64,
    },

    /// The higher-moment series of a periodic weight does not converge.
    #[error("moment series diverges: reverse-Hoelder condition fails by {excess}")]
    DivergentSeries { excess: f64 },

    /// Scaling parameter outside the admissible closed interval `[-1, 1]`.
    #[error("lambda {0} outside [-1, 1]")]
    LambdaOutOfRange(f64),

    /// Line-geometry offset outside `(0, 1/(n+1))`.
    #[error("line offset {a} outside (0, {limit}) for dimension {n}")]
    OffsetOutOfRange { n: usize, a: f64, limit: f64 },

    /// Exponent outside the admissible range (e.g. `p <= 1`).
    #[error("exponent {p} not admissible: {reason}")]
    BadExponent { p: f64, reason: &'static str },

    /// A periodic pattern with no entries.
    #[error("periodic pattern must have at least one split")]
    EmptyPattern,

    /// Root finding failed to bracket or converge.
    #[error("root finding failed: {0}")]
    NoRoot(String),

    /// A function that must have mean zero does not.
    #[error("function has mean {mean}, expected 0 within {tol}")]
    NotMeanZero { mean: f64, tol: f64 },

    /// A built certificate failed its own verification.
    #[error("certificate verification failed: {0}")]
    CertificateInvalid(String),

    /// An argument collection that must be non-empty is empty.
    #[error("{0} must be non-empty")]
    EmptyInput(&'static str),
}

impl Error {
    pub(crate) fn not_nested(inner: DyadicIndex, outer: DyadicIndex) -> Self {
        Error::NotNested {
            inner_level: inner.level(),
            inner_pos: inner.pos(),
            outer_level: outer.level(),
            outer_pos: outer.pos(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
