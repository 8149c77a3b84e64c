use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("matrix is rank deficient: numerical rank {rank} < {rows} rows")]
    RankDeficient { rank: usize, rows: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid norm groups: {0}")]
    InvalidGroups(String),
    #[error("set is empty: coefficient constraints are infeasible")]
    Infeasible,
    #[error("non-finite value in set data")]
    NonFinite,
    #[error("cannot reduce: every generator participates in an equality constraint")]
    CannotReduce,
    #[error("conic solver failed: {0}")]
    Solver(String),
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    #[error("support direction must be non-zero")]
    ZeroDirection,
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid too coarse to bracket the density threshold")]
    GridTooCoarse,
    #[error("point cloud is affinely degenerate (dimension {dim}, rank {rank})")]
    DegenerateCloud { dim: usize, rank: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentError {
    #[error("data matrix M lost row rank: data are not sufficiently exciting ({0})")]
    RankDeficientData(NumericError),
    #[error("trajectory is malformed: {0}")]
    MalformedTrajectory(String),
    #[error("the noise assumption is inconsistent with the data: parameter set is empty")]
    EmptyParamSet,
    #[error("invalid noise description: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Aggregate error for the experiment harness and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Ident(#[from] IdentError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Assertion(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
