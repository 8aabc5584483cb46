use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("determinant must equal 1, got {det:.12e}")]
    DeterminantNotUnit { det: f64 },

    #[error("point pair is antipodal: diastasis is infinite")]
    InfiniteDiastasis,

    #[error("point leaves the affine chart: {0}")]
    OutOfChart(String),

    #[error("quadrature did not reach tolerance {tolerance:.3e}: value {value:.15e}, error estimate {error:.3e}")]
    Quadrature { value: f64, error: f64, tolerance: f64 },

    #[error("sampler diagnostic: {0}")]
    Sampler(String),

    #[error("numerical step failed: {0}")]
    Step(String),

    #[error("root {root} fails residual check ({residual:.3e})")]
    RootResidual { root: String, residual: f64 },

    #[error("root finder did not converge after {iterations} iterations")]
    RootConvergence { iterations: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
