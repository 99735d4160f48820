use thiserror::Error;

/// Errors raised anywhere in the positioning pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("no usable records in input")]
    EmptyInput,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported constellation: {0}")]
    UnsupportedConstellation(String),
    #[error("degenerate geometry: receiver coincides with satellite")]
    DegenerateGeometry,
    #[error("insufficient satellites: {have} available, {need} required")]
    InsufficientSatellites { have: usize, need: usize },
    #[error("singular geometry (rank {rank} < {cols})")]
    SingularGeometry { rank: usize, cols: usize },
    #[error("iteration diverged")]
    Divergence,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("filter diverged (non-finite state)")]
    FilterDiverged,
    #[error("vincenty inverse did not converge")]
    VincentyNonConvergence,
    #[error("no time overlap between solutions and ground truth")]
    NoOverlap,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("no epoch produced a solution")]
    NoSolution,
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Whether this error stems from numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGeometry
                | Error::SingularGeometry { .. }
                | Error::Divergence
                | Error::Numerical(_)
                | Error::FilterDiverged
                | Error::VincentyNonConvergence
                | Error::NoSolution
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
