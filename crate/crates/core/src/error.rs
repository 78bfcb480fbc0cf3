use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{n_qubits} qubits exceeds the configured cap of {max_qubits}")]
    DimensionOverflow { n_qubits: usize, max_qubits: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("qubit targets {targets:?} invalid for a {n_qubits}-qubit state")]
    InvalidTargets { targets: Vec<usize>, n_qubits: usize },

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("unphysical coherence times: T2 = {t2} us exceeds 2*T1 = {} us", 2.0 * .t1)]
    Unphysical { t1: f64, t2: f64 },

    #[error("coherence sampling exceeded {attempts} redraws (mu1={mu1}, sigma1={sigma1}, mu2={mu2}, sigma2={sigma2})")]
    RejectionBudget {
        attempts: usize,
        mu1: f64,
        sigma1: f64,
        mu2: f64,
        sigma2: f64,
    },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unknown platform '{0}'")]
    UnknownPlatform(String),

    #[error("cost evaluation failed at point {index}: {source}")]
    CostEvaluation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep failed at L={layers}: {source}")]
    Sweep {
        layers: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {file}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Parse {
        file: String,
        line: Option<u64>,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by user input (configs, files, arguments)
    /// rather than by the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::UnknownPlatform(_)
            | Error::ProbabilityOutOfRange(_)
            | Error::Unphysical { .. }
            | Error::DimensionOverflow { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => true,
            Error::CostEvaluation { source, .. } | Error::Sweep { source, .. } => {
                source.is_config()
            }
            _ => false,
        }
    }
}
