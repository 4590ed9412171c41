use thiserror::Error;

/// Errors produced by the estimators, oracles and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("unsupported moment order {0} (maximum is 6)")]
    UnsupportedOrder(usize),

    #[error("singular moment system while constructing the fourth-order kernel")]
    SingularSystem,

    #[error("invalid kernel profile: {0}")]
    InvalidProfile(String),

    #[error("invalid clipping function: {0}")]
    InvalidClipping(String),

    #[error("negative density value {0} passed to the clipped scale map")]
    NegativeDensity(f64),

    #[error("bandwidth {h} too large: h^2 |beta| = {value} must stay below 1/2")]
    BandwidthTooLarge { h: f64, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid bandwidth schedule: {0}")]
    InvalidSchedule(String),

    #[error("zero scale at coincident points t = s")]
    ZeroScale,

    #[error("evaluation grids differ")]
    GridMismatch,

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("derivatives of order {requested} requested but the density provides {available}")]
    DerivativeUnavailable { requested: usize, available: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("region is empty")]
    EmptyRegion,

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("density `{id}` rejected: {reason}")]
    DensityRejected { id: String, reason: String },

    #[error("estimate integrates to 1 ± {deviation:e} (tolerance {tolerance:e}) at n = {n}")]
    IntegralCheck { n: usize, deviation: f64, tolerance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
