use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("ill-conditioned matrix: condition estimate {cond:.3e} exceeds {threshold:.1e}")]
    IllConditioned { cond: f64, threshold: f64 },

    #[error("invalid kernel matrix: smallest eigenvalue {min_eigenvalue:.3e} (norm {norm:.3e})")]
    InvalidKernel { min_eigenvalue: f64, norm: f64 },

    #[error("hyperparameter outside its feasible box: {0}")]
    Domain(String),

    #[error("fit is undefined for a constant true impulse response")]
    UndefinedFit,

    #[error("criterion {0} needs the true impulse response")]
    MissingTruth(&'static str),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("no restart converged ({restarts} restarts, best criterion {best_value:.6e} at {best_eta:?})")]
    NonConvergence {
        restarts: usize,
        best_value: f64,
        best_eta: Vec<f64>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by the caller's input shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::InvalidKernel { .. }
                | Error::Singular(_)
                | Error::NonConvergence { .. }
                | Error::UndefinedFit
        )
    }
}
