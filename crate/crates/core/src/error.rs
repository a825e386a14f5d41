use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("grid needs at least 8 nodes per axis, got {0}")]
    TooFewNodes(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite kernel value at distance {0}")]
    NonFiniteKernel(f64),
    #[error("reaction violates g(x,0) >= 0 >= g(x,1) at node {node}: g(0) = {g0}, g(1) = {g1}")]
    ReactionSign { node: usize, g0: f64, g1: f64 },
    #[error("custom reaction is missing its {0}")]
    MissingReactionPart(&'static str),
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("phase bound excursion {excursion:e} at t = {t} exceeds {limit:e}; reduce dt")]
    BoundExcursion { t: f64, excursion: f64, limit: f64 },
    #[error("tangent frame lost rank at column {column} (norm {norm:e})")]
    FrameDegenerate { column: usize, norm: f64 },
    #[error("need >= {needed} points to fit, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-positive value {value} at t = {t}; fit the distance to the limit or report convergence below floor")]
    NonPositive { t: f64, value: f64 },
    #[error("value {value:e} at t = {t} is below the fitting floor {floor:e}")]
    BelowFloor { t: f64, value: f64, floor: f64 },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("field dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
