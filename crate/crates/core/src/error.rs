use thiserror::Error;

/// Errors raised by the solver, transform and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown builtin name `{0}`")]
    UnknownName(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too small: {nodes} nodes, need at least {required}")]
    GridTooSmall { nodes: usize, required: usize },

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("non-finite state while integrating at lambda = {lambda}, x = {x}")]
    NonFiniteState { lambda: f64, x: f64 },

    #[error("x = {0} lies outside [0, pi]")]
    OutOfDomain(f64),

    #[error("invalid scan window [{min}, {max}]")]
    InvalidWindow { min: f64, max: f64 },

    #[error("scan resolution too coarse near lambda = {lambda}: {detail}")]
    WindowTooCoarse { lambda: f64, detail: String },

    #[error("lambda = {lambda} is not an eigenvalue (relative sigma_min = {relative_sigma:e})")]
    NotAnEigenvalue { lambda: f64, relative_sigma: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("duplicate perturbation entry (k = {k}, i = {i})")]
    DuplicateEntry { k: usize, i: usize },

    #[error(
        "admissibility condition 1 + c*|phi|^2 > 0 violated for entry (k = {k}, i = {i}): \
         margin = {margin}"
    )]
    ConditionViolated { k: usize, i: usize, margin: f64 },

    #[error("invalid eigenspace direction for k = {k}: {detail}")]
    InvalidDirection { k: usize, detail: String },

    #[error("I + G(x)C is numerically singular at x = {x} (reciprocal condition {rcond:e})")]
    SingularResolvent { x: f64, rcond: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
