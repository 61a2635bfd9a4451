use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The distance gradient vanished; the point is outside the tube where
    /// the nearest boundary point is unique.
    #[error("degenerate normal at t={t}: gradient norm {norm:e} below tolerance")]
    DegenerateNormal { t: f64, norm: f64 },

    #[error("non-finite {what} coefficient at t={t}")]
    NonFiniteCoefficient { what: &'static str, t: f64 },

    #[error("start point is not strictly inside the domain (signed distance {distance})")]
    StartOutsideDomain { distance: f64 },

    #[error("no exit after {max_steps} steps on an open horizon")]
    MaxStepsExceeded { max_steps: u64 },

    #[error("no side exits among the records")]
    NoSideExits,

    #[error("no usable (uncapped) ladder samples")]
    NoSamples,

    #[error("degenerate fit: all step sizes are equal")]
    DegenerateFit,

    #[error("non-positive error {error} at delta={delta}")]
    NonPositiveError { delta: f64, error: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
