use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the seaclear library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to decode tiff {path}: {source}")]
    Tiff {
        path: PathBuf,
        #[source]
        source: tiff::TiffError,
    },

    #[error("{path}: expected {expected}, found {found}")]
    UnsupportedLayout {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("bad float grid {path} (line {line}): {detail}")]
    DepthText {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("depth map is constant (min == max), cannot min-max normalize")]
    ConstantDepth,

    #[error("dimension mismatch for {what}: {expected_w}x{expected_h} vs {found_w}x{found_h}")]
    DimensionMismatch {
        what: &'static str,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },

    #[error("invalid {what}: {why}")]
    InvalidArgument { what: &'static str, why: String },

    #[error("image too small for {what}: need at least {min_w}x{min_h}, got {w}x{h}")]
    ImageTooSmall {
        what: &'static str,
        min_w: usize,
        min_h: usize,
        w: usize,
        h: usize,
    },

    #[error("channel {channel} has zero mean, white-balance gain undefined")]
    ZeroMeanChannel { channel: usize },

    #[error("patch {index} has zero-norm mean color, angle undefined")]
    ZeroNormPatch { index: usize },

    #[error("expected exactly 6 calibration patches, found {found}")]
    PatchCount { found: usize },

    #[error("patch {index} is empty or outside image bounds")]
    PatchOutOfBounds { index: usize },

    #[error("fit aborted at iteration {iteration}: non-finite {what}")]
    NonFiniteFit { iteration: usize, what: &'static str },

    #[error("malformed json {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
