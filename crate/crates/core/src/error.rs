use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("mode count mismatch: expected {expected}, got {got}")]
    ModeMismatch { expected: usize, got: usize },

    #[error("size mismatch in {what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} = {value} is out of range ({rule})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        rule: &'static str,
    },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("state blow-up at step {step}: particle {particle} has H-norm {norm:e}")]
    BlowUp { step: usize, particle: usize, norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
