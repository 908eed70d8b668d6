use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::estimator::EstimatorError;
use crate::extract::ExtractError;
use crate::field::FieldError;
use crate::geom::GeomError;
use crate::sign::SignError;

/// Any error produced by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad configuration: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geom(e) => e.kind(),
            Error::Autodiff(e) => e.kind(),
            Error::Estimator(e) => e.kind(),
            Error::Field(e) => e.kind(),
            Error::Sign(e) => e.kind(),
            Error::Extract(e) => e.kind(),
            Error::Io(_) => "Io",
            Error::Config(_) => "Config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
