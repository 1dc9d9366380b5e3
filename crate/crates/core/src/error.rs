use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::GatewayError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dataset: {0}")]
    Validation(String),

    #[error("clustering: {0}")]
    Clustering(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("template: {0}")]
    Template(String),

    #[error("describe: {0}")]
    Describe(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("config: {0}")]
    Config(String),

    #[error("cluster {cluster_id}: {source}")]
    InCluster {
        cluster_id: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_cluster(self, cluster_id: usize) -> Self {
        match self {
            e @ Error::InCluster { .. } => e,
            e => Error::InCluster {
                cluster_id,
                source: Box::new(e),
            },
        }
    }

    /// Cluster id attached to this error, if any.
    pub fn cluster_id(&self) -> Option<usize> {
        match self {
            Error::InCluster { cluster_id, .. } => Some(*cluster_id),
            _ => None,
        }
    }

    /// True when the root cause is a network or endpoint failure.
    pub fn is_transport(&self) -> bool {
        match self {
            Error::Gateway(g) => g.is_transport(),
            Error::InCluster { source, .. } => source.is_transport(),
            _ => false,
        }
    }
}
