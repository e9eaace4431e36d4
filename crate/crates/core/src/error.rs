use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("support of the weight matrix contains a directed cycle")]
    NotADag,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weights are not block upper triangular: block ({row}, {col}) is nonzero")]
    NotBlockTriangular { row: usize, col: usize },
    #[error("variable index {index} out of range for {n_vars} variables")]
    IndexOutOfRange { index: usize, n_vars: usize },
    #[error("singular diagonal block {0}")]
    SingularBlock(usize),
    #[error("concrete blocks of abstract variables {first} and {second} overlap on variable {var}")]
    OverlappingBlocks { first: usize, second: usize, var: usize },
    #[error("invalid abstraction map: {0}")]
    InvalidAbstraction(String),
    #[error("rejection sampling exhausted after {0} attempts")]
    ResampleExhausted(usize),
    #[error("too many edges: {edges} requested but a DAG on {nodes} nodes admits at most {max}")]
    TooManyEdges { edges: usize, nodes: usize, max: usize },
    #[error("degenerate column {0}: zero variance")]
    DegenerateColumn(usize),
    #[error("empty dataset")]
    EmptyData,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
