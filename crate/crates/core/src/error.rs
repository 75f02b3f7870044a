use thiserror::Error;

pub type Result<T, E = NdpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NdpError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("basis activations sum to {sum:e} at phase {x}; below the denominator floor")]
    SingularBasis { x: f64, sum: f64 },

    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("environment contract violated: {0}")]
    Contract(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NdpError {
    /// True for failures caused by the numbers rather than by the inputs' shape
    /// or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            NdpError::SingularBasis { .. } | NdpError::IntegrationDiverged { .. } | NdpError::NonFinite(_)
        )
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NdpError::NonFinite(what.to_string()))
    }
}
