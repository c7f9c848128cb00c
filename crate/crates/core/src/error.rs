use std::path::PathBuf;

use thiserror::Error;

/// Shape and contract violations raised by the tensor and tape layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    Length { rows: usize, cols: usize, len: usize },
    #[error("backward requires a 1x1 loss node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),
}

/// Errors raised while building or running a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("non-finite value in parameter `{0}`")]
    NonFiniteParameter(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Errors raised by image, grid and spectrum handling.
#[derive(Debug, Error)]
pub enum SignalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed image: {0}")]
    Decode(String),
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("unsupported bit depth {0}; only 8-bit images are accepted")]
    BitDepth(u32),
    #[error("image shape mismatch: {left:?} vs {right:?}")]
    Shape {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("grid must be at least 2x2, got {width}x{height}")]
    DegenerateGrid { width: usize, height: usize },
    #[error("crop {crop_w}x{crop_h} exceeds image {width}x{height}")]
    Crop {
        crop_w: usize,
        crop_h: usize,
        width: usize,
        height: usize,
    },
    #[error("spectrum of an empty signal")]
    EmptySignal,
}
