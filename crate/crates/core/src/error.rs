use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("root {index} has squared norm {norm_sq}, expected 2")]
    NormViolation { index: usize, norm_sq: f64 },
    #[error("roots {first} and {second} are parallel but not opposite")]
    ParallelViolation { first: usize, second: usize },
    #[error("reflection in root {index} does not map the root set onto itself")]
    ClosureViolation { index: usize },
    #[error("reflection requested in the zero vector")]
    ZeroRoot,
    #[error("group closure exceeded the order cap {cap}")]
    OrderCapExceeded { cap: usize },
    #[error("unknown root system preset `{0}`")]
    UnknownPreset(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("group element {element} does not permute the grid (point {point})")]
    IncompatibleGroup { element: usize, point: usize },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("scale k={k} is outside the resolvable window ({reason})")]
    ScaleOutOfRange { k: i32, reason: String },
    #[error("normalizer T_k(1) degenerate at scale {k}: {value}")]
    DegenerateNormalizer { k: i32, value: f64 },
    #[error("function is not G-invariant (defect {defect:e} between points {i} and {j})")]
    NotInvariant { defect: f64, i: usize, j: usize },
    #[error("the Besov Ḃ₁ norm needs the tilde family of a Calderón system")]
    MissingTildeFamily,
    #[error("order M={m} too large for scale range of width {width}")]
    RangeTooNarrow { m: usize, width: i32 },
    #[error("remainder is not contractive: ‖R_M‖ = {norm}")]
    NotContractive { norm: f64 },
    #[error("input function is identically zero")]
    ZeroInput,
    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    NoConvergence { estimate: f64, iterations: usize },

    #[error("level set is empty")]
    EmptySet,
    #[error("lambda {lambda} too small: the level set covers the whole grid")]
    LambdaTooSmall { lambda: f64 },
    #[error("cube decomposition needs a cubic box")]
    NonCubicBox,

    #[error("bump library is empty")]
    EmptyLibrary,
    #[error("origin is not a grid point")]
    OriginMissing,
    #[error("R={r} exceeds a quarter of the box half-width {half_width}")]
    RTooLarge { r: f64, half_width: f64 },
    #[error("mollifier width {eps} below 4 grid spacings ({min})")]
    EpsTooSmall { eps: f64, min: f64 },

    #[error("invalid configuration field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("{context}: {source}")]
    Suite {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error in {path:?} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::ConfigInvalid { field: field.to_string(), message: message.into() }
    }

    pub(crate) fn in_suite(self, context: &str) -> Self {
        Error::Suite { context: context.to_string(), source: Box::new(self) }
    }
}
