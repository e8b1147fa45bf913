use std::process::ExitCode;

/// Command failures, split by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The request cannot be satisfied as given: bad config, an output
    /// collision, malformed input tables.
    #[error("{0:#}")]
    Config(anyhow::Error),
    /// Something failed while doing the work.
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Self::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        Self::Runtime(anyhow::anyhow!("{msg}"))
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(_) => ExitCode::from(1),
            Self::Runtime(_) => ExitCode::from(2),
        }
    }
}

impl From<noma_dqn::Error> for CliError {
    fn from(e: noma_dqn::Error) -> Self {
        match e {
            noma_dqn::Error::Config { .. } => Self::Config(e.into()),
            other => Self::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}
