use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Physical dimensions that do not fit the lattice.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Inconsistent scenario or marker configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value outside its permitted range.
    #[error("range error: {0}")]
    Range(String),

    /// Broken group forest.
    #[error("structural error: {0}")]
    Structure(String),

    /// A measure asked of an input it is not defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent trajectory data.
    #[error("data error at step {step}: {message}")]
    Data { step: u64, message: String },

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    /// The simulation state stopped being self-consistent.
    #[error("internal consistency violation: {0}")]
    Consistency(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for problems with the inputs (as opposed to failures while running).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Config(_)
                | Error::Range(_)
                | Error::Structure(_)
                | Error::Parse { .. }
                | Error::UnknownMetric(_)
        )
    }
}
