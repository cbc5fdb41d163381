use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{file}: {message}")]
    ConfigParse { file: PathBuf, message: String },

    /// A semantically invalid setting, located by its dotted path.
    #[error("config field `{field}`: {message}")]
    ConfigField { field: String, message: String },

    #[error("dataset directory {0} contains no images")]
    EmptyDataset(PathBuf),

    #[error("{} image(s) could not be decoded:\n{}", .0.len(), .0.iter().map(|(p, m)| format!("  {}: {m}", p.display())).collect::<Vec<_>>().join("\n"))]
    Undecodable(Vec<(PathBuf, String)>),

    #[error("image {path} is {height}x{width}, smaller than the network's size divisor {divisor}")]
    ImageTooSmall { path: PathBuf, height: usize, width: usize, divisor: usize },

    #[error("no manifest at {0}; run an experiment into this directory first")]
    MissingManifest(PathBuf),

    #[error("{0}")]
    Usage(String),

    #[error("experiment failed for {failed} of {total} seed(s); partial manifest written to {manifest}")]
    RunFailed { failed: usize, total: usize, manifest: PathBuf },

    #[error(transparent)]
    Core(#[from] lip_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::ConfigField { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
