use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum CimError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("integration diverged at step {step} (dopo {dopo}): {reason}")]
    Diverged {
        step: usize,
        dopo: usize,
        reason: String,
    },

    #[error("degenerate ensemble at step {step} (dopo {dopo}): weights collapsed")]
    DegenerateEnsemble { step: usize, dopo: usize },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CimError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        CimError::Input(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CimError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures that invalidate a single trial rather than the whole run.
    pub fn is_trial_failure(&self) -> bool {
        matches!(
            self,
            CimError::Diverged { .. } | CimError::DegenerateEnsemble { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CimError>;
