//! Tiled storage engine for labeled frame sequences.
//!
//! Frames are split into independently decodable tiles; queries for
//! labeled objects decode only the tiles their boxes intersect. A cost
//! model estimates decode work per layout, and a regret-driven tuner
//! re-tiles temporal segments online as the query workload reveals
//! itself. A synthetic scene and workload generator plus a benchmark
//! harness drive end-to-end measurements.

pub mod bench;
pub mod codec;
pub mod cost;
pub mod counters;
pub mod error;
pub mod geometry;
pub mod index;
pub mod manifest;
pub mod query;
pub mod roi;
pub mod store;
pub mod synth;
pub mod tuner;
pub mod y8;

pub use counters::{decode_stats, reset_decode_stats, DecodeStats};
pub use error::{Error, Result};
pub use geometry::{BoundingBox, FrameDims, LayoutConfig, Rect, TileLayout};
pub use index::{IndexEntry, SemanticIndex};
pub use query::{LabelPredicate, QuerySpec};
pub use store::{LayoutPlan, PixelRegion, VideoStore};
pub use y8::FrameSeq;
