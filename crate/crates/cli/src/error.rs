use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] netra_core::Error),

    #[error("stage {stage}: {msg}")]
    Orchestration { stage: String, msg: String },

    #[error("stage {stage}: cached artifact {artifact} no longer matches its recorded digest (rerun with --force)")]
    StaleCache { stage: String, artifact: String },

    #[error("cannot read config {path}: {msg}")]
    ConfigFile { path: PathBuf, msg: String },
}

impl CliError {
    pub fn orchestration(stage: &str, msg: impl Into<String>) -> Self {
        CliError::Orchestration {
            stage: stage.to_string(),
            msg: msg.into(),
        }
    }

    /// 0 ok, 2 config, 3 data, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use netra_core::Error as E;
        match self {
            CliError::ConfigFile { .. } => 2,
            CliError::Core(e) => match e {
                E::Config(_) => 2,
                E::Data(_) | E::Parse { .. } | E::InvalidInput(_) => 3,
                E::Numeric(_) | E::Evaluation(_) => 4,
                E::Io { .. } => 1,
            },
            CliError::Orchestration { .. } | CliError::StaleCache { .. } => 1,
        }
    }
}

pub(crate) fn json_err(path: &std::path::Path, e: serde_json::Error) -> CliError {
    CliError::Core(netra_core::Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        col: e.column(),
        msg: e.to_string(),
    })
}
