use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Fisher information matrix is singular (condition number {condition:e})")]
    SingularFim { condition: f64 },
    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("run {run}, slot {slot}: {source}")]
    InRun {
        run: u64,
        slot: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for the numerical failures the protocol can hit mid-run.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularFim { .. } | Error::InvalidPosterior(_) | Error::NonFinite(_) | Error::Domain(_) => true,
            Error::InRun { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
