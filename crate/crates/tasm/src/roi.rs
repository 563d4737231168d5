//! Region-of-interest bootstrap tiling at ingest time.
//!
//! Before any object detections exist, an inexpensive per-GOP detector
//! (background subtraction by default) finds regions likely to contain
//! objects. Each GOP is tiled around its detected regions, and the regions
//! are indexed under the label `roi` so later full scans can decode only
//! the interesting tiles.

use std::collections::VecDeque;
use std::path::Path;

use crate::cost::should_tile;
use crate::error::{Error, Result};
use crate::geometry::{fine_grained_layout, BoundingBox, FrameDims, LayoutConfig, Rect, TileLayout};
use crate::index::SemanticIndex;
use crate::query::{LabelPredicate, QuerySpec};
use crate::store::{LayoutPlan, VideoStore};
use crate::y8::FrameSeq;

pub const ROI_LABEL: &str = "roi";

/// Detector sampling and thresholding knobs.
#[derive(Debug, Clone, Copy)]
pub struct RoiConfig {
    /// Frames between detector invocations; `None` means once per GOP, on
    /// its first frame.
    pub sample_stride: Option<u32>,
    /// Absolute byte difference against the background that marks a
    /// foreground pixel.
    pub diff_threshold: u8,
    /// Connected components smaller than this many pixels are dropped.
    pub min_component_area: u32,
    /// Not-tiling threshold applied to each GOP's candidate layout.
    pub alpha: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            sample_stride: None,
            diff_threshold: 15,
            min_component_area: 64,
            alpha: 0.8,
        }
    }
}

/// Anything that maps a frame to ROI rectangles. Implementations must be
/// deterministic for a given frame.
pub trait RoiDetector {
    fn detect(&self, dims: FrameDims, pixels: &[u8]) -> Vec<Rect>;
}

/// Background-subtraction detector: connected components of pixels that
/// differ from a reference background by more than a threshold.
pub struct BgSubDetector {
    background: Vec<u8>,
    cfg: RoiConfig,
}

impl BgSubDetector {
    pub fn new(background: Vec<u8>, cfg: RoiConfig) -> Self {
        Self { background, cfg }
    }
}

impl RoiDetector for BgSubDetector {
    fn detect(&self, dims: FrameDims, pixels: &[u8]) -> Vec<Rect> {
        foreground_components(
            pixels,
            &self.background,
            dims,
            self.cfg.diff_threshold,
            self.cfg.min_component_area,
        )
    }
}

/// Per-pixel median of up to the first five sample frames; assumes a
/// static camera.
pub fn median_background(samples: &[&[u8]]) -> Vec<u8> {
    let take = samples.len().min(5);
    let n = samples[0].len();
    let mut bg = vec![0u8; n];
    let mut vals = [0u8; 5];
    for (i, b) in bg.iter_mut().enumerate() {
        for (j, s) in samples[..take].iter().enumerate() {
            vals[j] = s[i];
        }
        let v = &mut vals[..take];
        v.sort_unstable();
        *b = v[take / 2];
    }
    bg
}

/// 4-connected components of `|pixel - background| > threshold`, returned
/// as bounding rects of components with at least `min_area` pixels,
/// ordered by (y1, x1).
fn foreground_components(
    pixels: &[u8],
    background: &[u8],
    dims: FrameDims,
    threshold: u8,
    min_area: u32,
) -> Vec<Rect> {
    let w = dims.width as usize;
    let h = dims.height as usize;
    let mask: Vec<bool> = pixels
        .iter()
        .zip(background)
        .map(|(&p, &b)| p.abs_diff(b) > threshold)
        .collect();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        let (mut x1, mut y1, mut x2, mut y2) = (w, h, 0usize, 0usize);
        let mut area = 0u32;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x + 1);
            y2 = y2.max(y + 1);
            area += 1;
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if area >= min_area {
            out.push(Rect::new(x1 as u32, y1 as u32, x2 as u32, y2 as u32));
        }
    }
    out.sort_by_key(|r| (r.y1, r.x1));
    out
}

/// Run background subtraction over a frame sequence. Frame indices in the
/// returned boxes are positions within `frames`; every box carries the
/// `roi` label.
pub fn detect_rois_bgsub(
    frames: &FrameSeq,
    background: &[u8],
    cfg: &RoiConfig,
) -> Result<Vec<BoundingBox>> {
    if background.len() != frames.dims.area() as usize {
        return Err(Error::EmptyInput("background dims mismatch"));
    }
    let mut out = Vec::new();
    for f in 0..frames.frame_count() {
        for r in foreground_components(
            frames.frame(f),
            background,
            frames.dims,
            cfg.diff_threshold,
            cfg.min_component_area,
        ) {
            out.push(BoundingBox::new(f, ROI_LABEL, r.x1, r.y1, r.x2, r.y2));
        }
    }
    Ok(out)
}

/// Ingest with per-GOP layouts built around detected ROIs.
///
/// The detector runs on frames sampled every `sample_stride` frames (by
/// default the first frame of each GOP); its boxes are indexed under
/// `roi` and, dilated by one alignment unit, drive a fine-grained layout
/// for their GOP. GOPs with no ROIs, or whose candidate layout fails the
/// not-tiling rule, stay untiled.
pub fn roi_ingest(
    root: impl AsRef<Path>,
    name: &str,
    frames: &FrameSeq,
    gop_len: u32,
    detector: &dyn RoiDetector,
    cfg: &RoiConfig,
    layout_cfg: &LayoutConfig,
    index: &SemanticIndex,
) -> Result<VideoStore> {
    let length = frames.frame_count();
    if length == 0 {
        return Err(Error::EmptyInput("no frames to ingest"));
    }
    if gop_len == 0 {
        return Err(Error::EmptyInput("gop_len must be >= 1"));
    }
    let dims = frames.dims;
    dims.validate(layout_cfg)?;
    index.register_video(name, dims, length)?;

    let stride = cfg.sample_stride.unwrap_or(gop_len).max(1);
    let n_sots = length.div_ceil(gop_len) as usize;
    let mut per_gop_boxes: Vec<Vec<BoundingBox>> = vec![Vec::new(); n_sots];
    let mut f = 0;
    while f < length {
        for r in detector.detect(dims, frames.frame(f)) {
            let b = BoundingBox::new(f, ROI_LABEL, r.x1, r.y1, r.x2, r.y2);
            index.add_box(name, &b)?;
            per_gop_boxes[(f / gop_len) as usize].push(b);
        }
        f += stride;
    }

    let mut layouts = Vec::with_capacity(n_sots);
    for (g, boxes) in per_gop_boxes.iter().enumerate() {
        let start = g as u32 * gop_len;
        let end = (start + gop_len).min(length);
        if boxes.is_empty() {
            layouts.push(TileLayout::omega(dims));
            continue;
        }
        let dilated: Vec<BoundingBox> = boxes
            .iter()
            .map(|b| {
                let r = b.rect().dilated(layout_cfg.align, dims);
                BoundingBox::new(b.frame, ROI_LABEL, r.x1, r.y1, r.x2, r.y2)
            })
            .collect();
        let candidate = fine_grained_layout(&dilated, dims, layout_cfg);
        let probe = QuerySpec::new(name, LabelPredicate::single(ROI_LABEL), Some(start..end));
        if should_tile(index, &[probe], start..end, &candidate, cfg.alpha)? {
            layouts.push(candidate);
        } else {
            layouts.push(TileLayout::omega(dims));
        }
    }
    VideoStore::ingest(root, name, frames, gop_len, &LayoutPlan::PerGop(layouts), layout_cfg)
}
