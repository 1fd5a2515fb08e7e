use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {block} at row {row}, column {col}")]
    NonFinite {
        block: &'static str,
        row: usize,
        col: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for {len} observations")]
    IndexOutOfRange { index: usize, len: usize },

    /// Deleting this observation leaves the first step undefined at its own covariate row.
    #[error("deletion singularity at observation {index}: leverage {leverage} is numerically one")]
    DeletionSingular { index: usize, leverage: f64 },

    #[error("second step did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}, last iterate {theta:?})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        theta: Vec<f64>,
    },

    #[error("rank-deficient second step: {0}")]
    RankDeficient(String),

    #[error("invalid weights: {0}")]
    InvalidWeight(String),

    #[error("invalid bootstrap weight distribution: {moment} is {value} (expected {expected})")]
    InvalidDistribution {
        moment: &'static str,
        value: f64,
        expected: f64,
    },

    #[error("jackknife failed on {} deletion(s), first at observation {}", .failed.len(), .failed.first().copied().unwrap_or_default())]
    JackknifeFailed { failed: Vec<usize> },

    #[error("bootstrap failed on {failed} of {total} draws (more than 1%)")]
    BootstrapFailed { failed: usize, total: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("column '{name}' not found; header is [{header}]")]
    MissingColumn { name: String, header: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by the numerical pipeline rather than by bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DeletionSingular { .. }
                | Error::NonConvergence { .. }
                | Error::RankDeficient(_)
                | Error::JackknifeFailed { .. }
                | Error::BootstrapFailed { .. }
        )
    }

    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Parse { .. }
                | Error::MissingColumn { .. }
                | Error::Io(_)
                | Error::InvalidInput(_)
                | Error::Shape(_)
        )
    }
}
