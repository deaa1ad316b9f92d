//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Config or argument validation failure that fits no dedicated variant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Selection budget of zero or larger than the pool.
    #[error("budget {budget} out of range for a pool of {pool} points")]
    BadBudget { budget: usize, pool: usize },

    /// The DPP kernel cannot support the requested subset size.
    #[error("kernel numerical rank {rank} is below the requested subset size {requested}")]
    RankDeficient { rank: usize, requested: usize },

    /// A classifier was asked to fit a context containing a single class.
    #[error("degenerate context: all {count} points carry class {class}")]
    DegenerateContext { class: u32, count: usize },

    #[error(
        "solver did not converge: KKT violation {violation:.3e} after {epochs} epochs \
         (tolerance {tol:.3e})"
    )]
    NonConvergence { violation: f64, tol: f64, epochs: usize },

    #[error("rows are not orthonormal: max Gram deviation {deviation:.3e} exceeds {tol:.1e}")]
    NotOrthonormal { deviation: f64, tol: f64 },

    #[error("method {method} requires a probability matrix and none was supplied")]
    MissingProbabilities { method: &'static str },

    #[error("invalid probability matrix: {0}")]
    BadProbabilities(String),

    /// Stratified picking hit a class with too few pool points.
    #[error("stratum for class {class} has {available} points, need {needed}")]
    StratumTooSmall { class: u32, available: usize, needed: usize },

    /// Malformed feature file; `offset` is the byte position of the problem.
    #[error("feature file: {kind} at byte {offset}")]
    FileFormat { offset: u64, kind: FormatErrorKind },

    /// A fit that should interpolate left a residual above tolerance.
    #[error("linear solve residual {residual:.3e} exceeds {tol:.3e}")]
    SolveResidual { residual: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    UnsupportedVersion(u16),
    Truncated,
    NonFinite,
    LabelOutOfRange { label: u32, classes: u32 },
    EmptyPool,
    /// Malformed header line or field (CSV variant).
    Header(String),
    /// Malformed data cell (CSV variant).
    Field(String),
}

impl std::fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadMagic => write!(f, "bad magic (expected \"AMLF\")"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported format version {v}"),
            Self::Truncated => write!(f, "truncated payload"),
            Self::NonFinite => write!(f, "non-finite feature value"),
            Self::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Self::EmptyPool => write!(f, "empty pool (n*d must be at least 1)"),
            Self::Header(msg) => write!(f, "bad header: {msg}"),
            Self::Field(msg) => write!(f, "bad field: {msg}"),
        }
    }
}
