use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {0} lies outside [0, 1]")]
    Domain(f64),

    #[error("invalid control grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate map at ({x}, {y}): jacobian determinant {gamma}")]
    DegenerateMap { x: f64, y: f64, gamma: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("singular element geometry in triangle {0}")]
    SingularElement(usize),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("input mismatch: {0}")]
    Mismatch(String),

    #[error("tracking functional requires a target velocity")]
    MissingTarget,

    #[error("degenerate sequence: {0}")]
    DegenerateSequence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::DegenerateMap { .. } => "degenerate_map",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::SingularElement(_) => "singular_element",
            Error::Singular(_) => "singular",
            Error::Eigen(_) => "eigen",
            Error::Mismatch(_) => "mismatch",
            Error::MissingTarget => "missing_target",
            Error::DegenerateSequence(_) => "degenerate_sequence",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
