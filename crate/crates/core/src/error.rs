use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("problem too large for dense oracle: {n_qubits} qubits (limit {limit})")]
    TooLarge { n_qubits: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid term: {0}")]
    InvalidTerm(String),

    #[error("{}:{line}: {msg}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Parse { path: Option<PathBuf>, line: usize, msg: String },

    #[error("parameter count mismatch: schedule expects {expected}, got {got}")]
    ParameterCount { expected: usize, got: usize },

    #[error("time {t} outside [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },

    #[error("switch times must be strictly increasing within [0, T]")]
    NonMonotoneSwitches,

    #[error("integrator not converged after {refinements} refinements (last energy change {last_change:e})")]
    NotConverged { refinements: usize, last_change: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
