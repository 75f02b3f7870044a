use ndp_core::NdpError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] NdpError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 configuration or other error, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    pub fn io(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.to_string();
        move |source| CliError::Io { context, source }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(NdpError::IntegrationDiverged { step: 3 }).exit_code(), 2);
        assert_eq!(CliError::Core(NdpError::NonFinite("loss".into())).exit_code(), 2);
        assert_eq!(CliError::Core(NdpError::Config("bad".into())).exit_code(), 1);
    }
}
