use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("grid '{0}' is not defined")]
    MissingGrid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("every replicate failed; first error: {0}")]
    AllFailed(String),
    #[error("output directory {0} holds files this tool did not write")]
    ForeignFiles(PathBuf),
    #[error(transparent)]
    Core(#[from] ssl_gmm_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type LabResult<T> = std::result::Result<T, LabError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
    let path = path.into();
    move |source| LabError::Io { path, source }
}
