use alloc::string::String;

/// Errors raised by the reduced-order modelling core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid linear multistep scheme: {0}")]
    InvalidScheme(&'static str),
    #[error("insufficient state history: need {needed} prior states, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("step index {step} outside 1..={n_steps}")]
    StepOutOfRange { step: usize, n_steps: usize },
    #[error("singular linear system in {0}")]
    Singular(&'static str),
    #[error("basis size {requested} exceeds numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time step {step} failed: {reason}")]
    StepFailure { step: usize, reason: String },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
