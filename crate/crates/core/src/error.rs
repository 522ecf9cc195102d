use thiserror::Error;

use crate::{agreement, clean, cluster, kv, pipeline, projection, propagate, store, vectorize};

/// Crate-level error; each module keeps its own error enum.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error(transparent)]
    Clean(#[from] clean::CleanError),
    #[error(transparent)]
    Config(#[from] kv::KvError),
    #[error(transparent)]
    Vectorize(#[from] vectorize::VectorizeError),
    #[error(transparent)]
    Cluster(#[from] cluster::ClusterError),
    #[error(transparent)]
    Propagate(#[from] propagate::PropagateError),
    #[error(transparent)]
    Agreement(#[from] agreement::AgreementError),
    #[error(transparent)]
    Projection(#[from] projection::ProjectionError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

impl Error {
    /// True when the error comes from bad input data rather than a bug or I/O failure.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Store(e) => !matches!(e, store::StoreError::Io { .. }),
            Error::Pipeline(e) => e.is_data_error(),
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
