use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejection sampler exceeded {cap} proposals for observation {obs}; acceptance probability has collapsed")]
    DivergingRejection { obs: usize, cap: usize },
    #[error("base-model design matrix is rank deficient")]
    SingularDesign,
    #[error("{0} is not positive definite even after jitter")]
    NotPositiveDefinite(&'static str),
    #[error("normalizing constant {0:e} is below 1e-300")]
    DegenerateDensity(f64),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("iteration {iteration} of chain {chain}: {source}")]
    AtIteration {
        chain: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DivergingRejection { .. }
            | Error::SingularDesign
            | Error::NotPositiveDefinite(_)
            | Error::DegenerateDensity(_)
            | Error::InvalidTree(_) => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Data(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
