use alloc::string::String;

use crate::mask::ImageShape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("image dimensions must be at least 1x1, got {height}x{width}")]
    InvalidShape { height: usize, width: usize },
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: ImageShape, right: ImageShape },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("value {value} at pixel {index} is outside [{lo}, {hi}]")]
    ValueOutOfRange { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("({row}, {col}) is outside a {shape} image")]
    OutOfBounds { row: usize, col: usize, shape: ImageShape },
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("segmenter backend: {0}")]
    Backend(String),
}
