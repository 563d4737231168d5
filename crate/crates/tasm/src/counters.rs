//! Process-global decode counters.
//!
//! Every chunk decode in the storage engine reports here, so tests and the
//! benchmark harness can snapshot exactly how much decode work a query
//! caused. Counters are monotone until explicitly reset.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

static PIXELS_DECODED: AtomicU64 = AtomicU64::new(0);
static TILES_DECODED: AtomicU64 = AtomicU64::new(0);
static CHUNKS_READ: AtomicU64 = AtomicU64::new(0);
static DECODE_NANOS: AtomicU64 = AtomicU64::new(0);

/// Snapshot of the global decode counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeStats {
    pub pixels_decoded: u64,
    pub tiles_decoded: u64,
    pub chunks_read: u64,
    pub seconds: f64,
}

pub fn decode_stats() -> DecodeStats {
    DecodeStats {
        pixels_decoded: PIXELS_DECODED.load(Ordering::Relaxed),
        tiles_decoded: TILES_DECODED.load(Ordering::Relaxed),
        chunks_read: CHUNKS_READ.load(Ordering::Relaxed),
        seconds: DECODE_NANOS.load(Ordering::Relaxed) as f64 * 1e-9,
    }
}

pub fn reset_decode_stats() {
    PIXELS_DECODED.store(0, Ordering::Relaxed);
    TILES_DECODED.store(0, Ordering::Relaxed);
    CHUNKS_READ.store(0, Ordering::Relaxed);
    DECODE_NANOS.store(0, Ordering::Relaxed);
}

pub(crate) fn record_decode(pixels: u64, elapsed: Duration) {
    PIXELS_DECODED.fetch_add(pixels, Ordering::Relaxed);
    TILES_DECODED.fetch_add(1, Ordering::Relaxed);
    CHUNKS_READ.fetch_add(1, Ordering::Relaxed);
    DECODE_NANOS.fetch_add(elapsed.as_nanos() as u64, Ordering::Relaxed);
}

pub(crate) fn record_chunk_copy() {
    CHUNKS_READ.fetch_add(1, Ordering::Relaxed);
}
