use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("variable {0} has no binding")]
    UnboundVariable(usize),
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("relaxation order too small for the problem degrees; smallest feasible d is {min_d}")]
    OrderTooSmall { min_d: usize },
    #[error("moment vector has vanishing mass (mu_0 = {0:e})")]
    VanishingMass(f64),
    #[error("patch is flat: enclosing ellipsoid would have zero volume")]
    DegenerateFlat,
    #[error("denominator is not positive on the domain (min sampled value {0:e})")]
    NonPositiveDenominator(f64),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sdp(#[from] sosgeom_sdp::SdpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
