use std::path::PathBuf;

use sphere_bergman_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("not big: sum of taus {total_tau} is not below k = {k}; the constrained space grows linearly in p only when sum_j tau_j < k")]
    NotBig { k: u32, total_tau: f64 },
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failures} of {samples} samples failed at p = {p}: {first}")]
    TooManyFailures { p: u32, failures: usize, samples: usize, first: CoreError },
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for rejected input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Core(e) if e.is_numerical() => 3,
            LabError::TooManyFailures { .. } => 3,
            _ => 2,
        }
    }
}

impl From<toml::de::Error> for LabError {
    fn from(e: toml::de::Error) -> Self {
        LabError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
