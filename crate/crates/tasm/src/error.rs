//! Crate-wide error type.

use crate::geometry::LayoutViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown video `{0}`")]
    UnknownVideo(String),

    #[error("video `{0}` already exists")]
    VideoExists(String),

    #[error("invalid video name `{0}` (use [A-Za-z0-9_.-])")]
    InvalidVideoName(String),

    #[error("box ({x1},{y1})..({x2},{y2}) invalid for {width}x{height} frame")]
    BoxOutOfBounds {
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
        width: u32,
        height: u32,
    },

    #[error("empty label")]
    EmptyLabel,

    #[error("frame {frame} out of range (video has {len} frames)")]
    FrameOutOfRange { frame: u32, len: u32 },

    #[error("frame range {start}..{end} out of bounds (video has {len} frames)")]
    RangeOutOfBounds { start: u32, end: u32, len: u32 },

    #[error("rect out of frame bounds")]
    RectOutOfBounds,

    #[error("invalid tile layout: {0:?}")]
    InvalidLayout(Vec<LayoutViolation>),

    #[error("frame dims {width}x{height} must be positive multiples of {align} and fit in u16")]
    BadFrameDims { width: u32, height: u32, align: u32 },

    #[error("{rows}x{cols} uniform grid violates minimum tile dims on a {width}x{height} frame")]
    GridTooFine {
        rows: u32,
        cols: u32,
        width: u32,
        height: u32,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("cannot parse predicate `{input}`: {reason}")]
    PredicateParse { input: String, reason: String },

    #[error("SOT {0} is already being retiled")]
    RetileInProgress(usize),

    #[error("SOT index {0} out of range")]
    UnknownSot(usize),

    #[error("corrupt {what}: {detail}")]
    Corrupt { what: &'static str, detail: String },

    #[error("infeasible scene density: target {target:.3}, realized {realized:.3}")]
    InfeasibleDensity { target: f64, realized: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
