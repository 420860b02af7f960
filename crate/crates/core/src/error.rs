use std::io;

use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {value} out of range on axis {axis} (extent {extent})")]
    CoordOutOfRange { axis: usize, value: usize, extent: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("axis {axis}: extent {extent} not divisible by {divisor}")]
    Indivisible { axis: usize, extent: usize, divisor: usize },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("random SU(3) draw degenerate after {0} retries")]
    DegenerateDraw(usize),
    #[error("bad gauge file header: {0}")]
    Header(String),
    #[error("unsupported gauge file version {0}")]
    Version(u32),
    #[error("truncated gauge file: expected {expected} payload bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("dimension overflow in gauge file header")]
    DimensionOverflow,
    #[error("dense operator of dimension {0} exceeds the oracle guard")]
    TooLarge(usize),
    #[error("unknown flop counting convention `{0}`")]
    UnknownConvention(String),
    #[error("half-precision overflow: value {0} not representable")]
    HalfOverflow(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("no feasible partition: {0}")]
    Infeasible(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("message mismatch: {0}")]
    Message(String),
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
