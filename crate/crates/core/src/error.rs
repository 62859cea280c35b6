use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("riccati iteration did not converge after {iterations} iterations (last step {last_step:e}); plant may not be stabilizable")]
    RiccatiNotConverged { iterations: usize, last_step: f64 },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("unstable closed loop (spectral radius {0})")]
    UnstableClosedLoop(f64),

    #[error("eigenvalue iteration did not converge")]
    EigenNotConverged,

    #[error("lyapunov doubling did not converge")]
    LyapunovNotConverged,

    #[error("population degenerate: every individual has infinite cost")]
    DegeneratePopulation,

    #[error("degenerate topology: {0}")]
    DegenerateTopology(String),

    #[error("no stable samples found in the sublevel set after {0} attempts")]
    NoStableSamples(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the numerics or the input data rather than by misuse of the API.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RiccatiNotConverged { .. }
                | Error::Singular(_)
                | Error::UnstableClosedLoop(_)
                | Error::EigenNotConverged
                | Error::LyapunovNotConverged
                | Error::DegeneratePopulation
                | Error::DegenerateTopology(_)
                | Error::NoStableSamples(_)
        )
    }
}
