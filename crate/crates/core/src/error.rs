use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GhostError>;

#[derive(Debug, Error)]
pub enum GhostError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("moment order {order} exceeds the supported maximum of {max}")]
    OrderOverflow { order: u32, max: u32 },

    #[error("result of `{what}` is not representable as a finite number")]
    Overflow { what: &'static str },

    #[error("`{what}` is outside its domain: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("need at least {needed} frames, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("grid {width}x{height} is smaller than 4x the speckle size ({fwhm} px)")]
    GridTooSmall { width: usize, height: usize, fwhm: f64 },

    #[error("region `{0}` contains no pixels")]
    EmptyRegion(&'static str),

    #[error("frame file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl GhostError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        GhostError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
