//! Error taxonomy shared across the measurement chain.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an out-of-contract value.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A profile was queried outside its sampled time range.
    #[error("time {t} min outside profile range [{first}, {last}] min")]
    TimeOutOfRange { t: f64, first: f64, last: f64 },

    /// More comparator edges in one firing than the capture buffer holds.
    #[error("capture overflow: more than {depth} edges in one firing")]
    CaptureOverflow { depth: usize },

    /// A frame buffer with the wrong length.
    #[error("bad frame length: expected {expected} bytes, got {got}")]
    Framing { expected: usize, got: usize },

    /// A structurally valid frame with illegal field values.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// Fewer wall points than a sphere needs.
    #[error("sphere fit needs at least 4 points, got {got}")]
    InsufficientPoints { got: usize },

    /// Wall points that do not pin down a sphere (e.g. coplanar).
    #[error("degenerate wall-point geometry (condition number {cond:.3e})")]
    DegenerateGeometry { cond: f64 },

    /// The sphere fit ran out of iterations.
    #[error("sphere fit did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
