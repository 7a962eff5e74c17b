use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_height}x{expected_width}, found {found_height}x{found_width}")]
    Shape {
        expected_height: usize,
        expected_width: usize,
        found_height: usize,
        found_width: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite value at valid pixel {0}")]
    NonFinite(usize),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("degenerate alignment: prediction is constant over the evaluated pixels")]
    DegenerateAlignment,
    #[error("optimization diverged at step {step}")]
    Divergence { step: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
