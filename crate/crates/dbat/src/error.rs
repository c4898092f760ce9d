use std::path::PathBuf;

/// Runner failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, RunError>;

impl RunError {
    pub fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        Self::Config {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
            Self::Io { .. } | Self::Internal(_) => 1,
        }
    }
}

impl From<dbat_core::Error> for RunError {
    fn from(e: dbat_core::Error) -> Self {
        use dbat_core::Error as E;
        match e {
            E::InvalidConfig(m) => Self::config(None, m),
            E::Data(_) | E::Parse { .. } | E::ShapeMismatch { .. } => Self::Data(e.to_string()),
            E::NonFinite { .. } | E::Domain { .. } => Self::Numeric(e.to_string()),
            E::Contract(_) => Self::Internal(e.to_string()),
        }
    }
}
