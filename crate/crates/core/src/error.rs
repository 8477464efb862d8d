use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eta kernel undefined for intrinsic dimension {0} (supported: 1..=3)")]
    UnsupportedDimension(usize),

    #[error("zero-variance cloud")]
    ZeroVarianceCloud,

    #[error("degenerate knot configuration")]
    DegenerateKnots,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("spectral solver did not converge: {0}")]
    Spectral(String),

    #[error("undefined angle: point coincides with the lift center")]
    UndefinedAngle,

    #[error("surface not watertight ({disagreeing} of {total} voxels disagree across axes)")]
    NotWatertight { disagreeing: usize, total: usize },

    #[error("need >= 2 time points")]
    TooFewTimePoints,

    #[error("{0}")]
    FixedGammaRequired(String),

    #[error("unknown simulation case {0}")]
    UnknownCase(usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// The innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
