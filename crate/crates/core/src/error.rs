use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A documented precondition of the called operation does not hold.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("degenerate pencil: right-hand matrix is numerically singular after jitter {jitter:e}")]
    DegeneratePencil { jitter: f64 },

    #[error("matrix is not positive semidefinite: Cholesky failed up to jitter {jitter:e}")]
    NotPsd { jitter: f64 },

    #[error("insufficient rank: requested {requested}, achievable {achievable}")]
    InsufficientRank { requested: usize, achievable: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("simulation blew up at step {step} (|x| = {value:.3e} > 10); try a smaller integration step")]
    BlowUp { step: usize, value: f64 },

    #[error("discretization too coarse: {0}")]
    Discretization(String),

    #[error("dense solver failed: {0}")]
    Solver(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("malformed model archive: {0}")]
    Archive(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
