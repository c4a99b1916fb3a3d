use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("degenerate data: column {column} has variance {variance:.3e}")]
    DegenerateData { column: usize, variance: f64 },

    #[error("shrinkage covariance could not be inverted")]
    SingularCovariance,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degrees of freedom must exceed 2, got {0}")]
    InvalidNu(f64),

    #[error("marginal for column {column} does not have a valid bounded support")]
    UnboundedMarginal { column: usize },

    #[error("t sample carries no chi-square latents")]
    MissingLatents,

    #[error("CDF estimate for column {column} returned {value} outside the admissible range")]
    CdfRangeViolation { column: usize, value: f64 },

    #[error("response vector has zero norm")]
    ZeroResponse,

    #[error("Lasso fit did not converge (column {column:?}, KKT residual {kkt_residual:.3e})")]
    NoConvergence {
        column: Option<usize>,
        kkt_residual: f64,
    },

    #[error("degenerate nodewise score for column {column}")]
    DegenerateScore { column: usize },

    #[error("degenerate tau^2 = {tau2:.3e} for column {column}")]
    DegenerateTau { column: usize, tau2: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),

    #[error("replication {rep}: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPsd { .. }
            | Error::DegenerateData { .. }
            | Error::SingularCovariance
            | Error::NoConvergence { .. }
            | Error::DegenerateScore { .. }
            | Error::DegenerateTau { .. }
            | Error::AllReplicationsFailed(_)
            | Error::CdfRangeViolation { .. }
            | Error::ZeroResponse => true,
            Error::Replication { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
