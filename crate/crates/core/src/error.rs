use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame is {width}x{height}, minimum is 16x16")]
    FrameTooSmall { width: usize, height: usize },

    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },

    #[error("initial box is degenerate after clipping to the frame")]
    DegenerateBox,

    #[error("template patch has zero variance")]
    FlatTemplate,

    #[error("template {template_w}x{template_h} does not fit in {frame_w}x{frame_h} frame")]
    TemplateTooLarge {
        template_w: usize,
        template_h: usize,
        frame_w: usize,
        frame_h: usize,
    },

    #[error("{frames} frames but {boxes} ground-truth lines in {path}")]
    CountMismatch {
        path: PathBuf,
        frames: usize,
        boxes: usize,
    },

    #[error("no frames with ground truth to evaluate")]
    NothingToEvaluate,

    #[error("prediction has {pred} boxes, ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("frame is {actual_w}x{actual_h}, sequence started at {expected_w}x{expected_h}")]
    FrameSizeChanged {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("sequence is empty")]
    EmptySequence,

    #[error("image error for {path}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("io error for {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
