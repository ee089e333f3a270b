use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. Every variant is a domain error except
/// [`Error::Io`] and [`Error::Parse`], which carry file diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("inner product of atoms {first} and {second} is {value}, outside [0, 1]")]
    InnerProductOutOfRange {
        first: usize,
        second: usize,
        value: f64,
    },

    #[error("block matrix is not positive semidefinite: eigenvalue {eigenvalue}")]
    NotPsd { eigenvalue: f64 },

    #[error("edge probability {value} for pair ({row}, {col}) is outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),

    #[error("requested {requested} eigenpairs of a {n}x{n} matrix")]
    InvalidRank { requested: usize, n: usize },

    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("eigenvalue {index} is {value}; embedding needs strictly positive eigenvalues")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("vertex {0} has zero expected degree")]
    ZeroExpectedDegree(usize),

    #[error("embedding is inconsistent: {0}")]
    InconsistentEmbedding(String),

    #[error("embedding has non-positive eigenvalue; least squares design is rank deficient")]
    RankDeficient,

    #[error("estimated probability at vertex {index} is {value}, outside the open unit interval")]
    DomainViolation { index: usize, value: f64 },

    #[error("constraint set {{w : {epsilon} <= x_i^T w <= 1 - {epsilon}}} has no feasible start")]
    InfeasibleConstraintSet { epsilon: f64 },

    #[error(
        "maximum-likelihood solver hit {iterations} iterations \
         (projected gradient norm {projected_gradient_norm})"
    )]
    MaxIterationsExceeded {
        iterations: usize,
        projected_gradient_norm: f64,
        best_w: Vec<f64>,
    },

    #[error("out-of-sample vertex has no edges")]
    IsolatedOosVertex,

    #[error("out-of-sample vertex attaches to in-sample vertex {0}, which has degree zero")]
    ZeroDegreeNeighbor(usize),

    #[error("method {method} needs a {expected} embedding, got {found}")]
    MethodMismatch {
        method: String,
        expected: String,
        found: String,
    },

    #[error("mean inner product mu^T x is {value}; must be positive")]
    NonpositiveMeanInnerProduct { value: f64 },

    #[error("second moment matrix is singular (smallest eigenvalue {0})")]
    FullRankViolation(f64),

    #[error("distribution needs eta margin > 0 (found {0})")]
    EtaViolation(f64),

    #[error("threshold equation has no root in [{lo}, {hi}]")]
    NoRootInBracket { lo: f64, hi: f64 },

    #[error("rate experiment needs at least two vertex counts")]
    InsufficientGrid,

    #[error("need at least two successful records in one (n, method, atom) group, found {0}")]
    InsufficientRecords(usize),

    #[error("records span more than one (n, method, atom) group")]
    MixedRecordGroups,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}
