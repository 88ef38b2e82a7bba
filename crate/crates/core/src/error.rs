use thiserror::Error;

/// Errors raised by graph, distribution, model and discovery operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph contains a cycle through `{0}`")]
    Cycle(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error(
        "node set {subset:?} is not graphically causally sufficient: \
         hidden common cause `{cause}` reaches {reached:?}"
    )]
    SufficiencyViolation {
        subset: Vec<String>,
        cause: String,
        reached: Vec<String>,
    },

    #[error("variable mismatch: {0}")]
    VariableMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("table with {entries} entries exceeds the cap of {cap}")]
    TableTooLarge { entries: usize, cap: usize },

    #[error("value {value} out of range for `{variable}` (cardinality {cardinality})")]
    ValueOutOfRange {
        variable: String,
        value: usize,
        cardinality: usize,
    },

    #[error("conditional of `{0}` is undefined in a context reached with positive probability")]
    UndefinedContext(String),

    #[error("matrix is singular (smallest pivot {0:e})")]
    Singular(f64),

    #[error("{nodes} nodes exceed the exhaustive-search cap of {cap}")]
    TooManyNodes { nodes: usize, cap: usize },

    #[error("state space of {states} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
