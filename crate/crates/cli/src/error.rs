use thiserror::Error;

/// Schema or semantic problem in a config file; `path` is the dotted field path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("sampler error: {0}")]
    Sampler(#[from] ctmc_lab::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Input(String),
}

impl CliError {
    /// 0 success, 1 I/O, 2 config or input, 3 runtime sampler failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Sampler(_) => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}
