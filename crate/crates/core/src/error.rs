use crate::backends::CallError;
use crate::prompts::PromptError;
use crate::trace::Phase;

/// A pipeline phase could not complete. The caller's trace keeps every
/// record written before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhaseError {
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("{phase}: {source}")]
    Prompt {
        phase: Phase,
        #[source]
        source: PromptError,
    },
}

impl PhaseError {
    pub fn prompt(phase: Phase, source: PromptError) -> Self {
        PhaseError::Prompt { phase, source }
    }

    pub fn phase(&self) -> Phase {
        match self {
            PhaseError::Call(c) => c.phase,
            PhaseError::Prompt { phase, .. } => *phase,
        }
    }

    /// Short error class used in run manifests.
    pub fn class(&self) -> &'static str {
        match self {
            PhaseError::Call(c) => c.class(),
            PhaseError::Prompt { .. } => "PromptError",
        }
    }
}
