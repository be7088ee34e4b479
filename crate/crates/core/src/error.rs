use thiserror::Error;

#[derive(Debug, Error)]
pub enum IsacError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid angular region [{lo}, {hi}] degrees")]
    InvalidRegion { lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The projection onto the Stiefel manifold is not unique for rank-deficient input.
    #[error("matrix is rank deficient (smallest singular value {0:e})")]
    Singular(f64),

    /// The diagonal clutter approximation of the sensing MI produced a non-positive log argument.
    #[error("sensing approximation out of domain: log argument {0}")]
    Domain(f64),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<IsacError>,
    },
}

impl IsacError {
    /// True for errors that come from numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            IsacError::Numeric(_) | IsacError::Singular(_) | IsacError::Domain(_) => true,
            IsacError::AtIteration { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, IsacError>;
