use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least {required} periods, got {got}")]
    InsufficientPeriods { required: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular design: columns {columns:?} are linearly dependent on earlier columns")]
    SingularDesign { columns: Vec<String> },

    #[error("boundary MLE: {0}")]
    BoundaryMle(String),

    #[error("IWLS diverged: {0}")]
    Divergence(String),

    #[error("non-positive rate {value} at position {index}")]
    NonPositiveRate { index: usize, value: f64 },

    #[error("non-identifiable direction: first sender coefficient is {value:e}; reorder the influence covariates so the first has a clearly nonzero effect")]
    NonIdentifiable { value: f64 },

    #[error("half-step {half_step} of outer iteration {outer}: {source}")]
    HalfStep {
        half_step: u8,
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fit has not converged")]
    NotConverged,

    #[error("information matrix not invertible (smallest eigenvalue {min_eigenvalue:e})")]
    NonInvertibleInformation { min_eigenvalue: f64 },

    #[error("unstable simulation: linear predictor {eta:.2} exceeded {guard} at period {period}; use smaller |alpha||beta| or a more negative intercept")]
    Unstable { eta: f64, guard: f64, period: usize },

    #[error("infeasible evaluation plan: {0}")]
    InfeasiblePlan(String),

    #[error("empty cell set")]
    EmptyCells,

    #[error("{path}: row {row}: {message}")]
    Input {
        path: String,
        row: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_half_step(self, half_step: u8, outer: usize) -> Self {
        Error::HalfStep {
            half_step,
            outer,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through half-step context.
    pub fn root(&self) -> &Error {
        match self {
            Error::HalfStep { source, .. } => source.root(),
            other => other,
        }
    }
}
