use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory escaped at s = {time}")]
    Escape { time: f64 },
    #[error("degenerate curvature at s = {s} (q = {q}): |V''| below threshold")]
    DegenerateCurvature { s: f64, q: f64 },
    #[error("grid does not resolve the highest retained momentum; need n_grid >= {min_n_grid}")]
    Resolution { min_n_grid: usize },
    #[error("boundary contamination: {0}")]
    BoundaryContamination(String),
    #[error("aliasing: kernel not band-limited on the Fourier grid; try n_alpha = {n_alpha}, n_beta = {n_beta}")]
    Aliasing { n_alpha: usize, n_beta: usize },
    #[error("accuracy check failed: {0}")]
    Accuracy(String),
    #[error("unsupported scenario: {0}")]
    Unsupported(String),
    #[error("recurrence probe: {0}")]
    Probe(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

impl Error {
    /// Process exit code for the CLI: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Resolution { .. }
            | Error::BoundaryContamination(_)
            | Error::Unsupported(_)
            | Error::Config(_) => 2,
            Error::Escape { .. }
            | Error::DegenerateCurvature { .. }
            | Error::Aliasing { .. }
            | Error::Accuracy(_)
            | Error::Probe(_) => 3,
            Error::Io(_) => 1,
            Error::Context { source, .. } => source.exit_code(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
