//! Tile layouts and box-to-tile geometry.
//!
//! A frame is partitioned by a regular grid: rows and columns extend through
//! the whole frame, so a layout is fully described by its row heights and
//! column widths. The 1x1 layout (the whole frame as a single tile) is
//! written `omega` throughout the crate. Layout construction works on
//! half-open integer pixel rectangles and keeps every interior boundary on a
//! multiple of the alignment unit.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Frame dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameDims {
    pub width: u32,
    pub height: u32,
}

impl FrameDims {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// Dimensions must be positive multiples of the alignment unit and fit
    /// in the on-disk u16 coordinate fields.
    pub fn validate(&self, cfg: &LayoutConfig) -> Result<()> {
        let ok = |d: u32| d > 0 && d % cfg.align == 0 && d <= u16::MAX as u32;
        if ok(self.width) && ok(self.height) {
            Ok(())
        } else {
            Err(Error::BadFrameDims {
                width: self.width,
                height: self.height,
                align: cfg.align,
            })
        }
    }
}

/// Alignment and minimum-tile constraints for layout construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutConfig {
    /// Alignment unit in pixels; every interior boundary lies on a multiple.
    pub align: u32,
    pub min_tile_w: u32,
    pub min_tile_h: u32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            align: 32,
            min_tile_w: 64,
            min_tile_h: 64,
        }
    }
}

/// A half-open pixel rectangle `[x1,x2) x [y1,y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rect {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl Rect {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.x2 <= self.x1 || self.y2 <= self.y1
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x1 < other.x2 && other.x1 < self.x2 && self.y1 < other.y2 && other.y1 < self.y2
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect::new(
            self.x1.max(other.x1),
            self.y1.max(other.y1),
            self.x2.min(other.x2),
            self.y2.min(other.y2),
        );
        if r.is_empty() {
            None
        } else {
            Some(r)
        }
    }

    /// Clip to frame bounds; returns `None` when nothing remains.
    pub fn clipped(&self, dims: FrameDims) -> Option<Rect> {
        let r = Rect::new(
            self.x1.min(dims.width),
            self.y1.min(dims.height),
            self.x2.min(dims.width),
            self.y2.min(dims.height),
        );
        if r.is_empty() {
            None
        } else {
            Some(r)
        }
    }

    /// Grow by `margin` on all sides, clamped to the frame.
    pub fn dilated(&self, margin: u32, dims: FrameDims) -> Rect {
        Rect::new(
            self.x1.saturating_sub(margin),
            self.y1.saturating_sub(margin),
            (self.x2 + margin).min(dims.width),
            (self.y2 + margin).min(dims.height),
        )
    }
}

/// A labeled axis-aligned box on one frame; coordinates are half-open.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundingBox {
    pub frame: u32,
    pub label: String,
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BoundingBox {
    pub fn new(frame: u32, label: impl Into<String>, x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Self {
            frame,
            label: label.into(),
            x1,
            y1,
            x2,
            y2,
        }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.x1, self.y1, self.x2, self.y2)
    }

    pub fn validate(&self, dims: FrameDims) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::EmptyLabel);
        }
        if self.x1 < self.x2 && self.y1 < self.y2 && self.x2 <= dims.width && self.y2 <= dims.height
        {
            Ok(())
        } else {
            Err(Error::BoxOutOfBounds {
                x1: self.x1,
                y1: self.y1,
                x2: self.x2,
                y2: self.y2,
                width: dims.width,
                height: dims.height,
            })
        }
    }
}

/// A regular tile grid over a frame: row heights plus column widths.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TileLayout {
    row_heights: Vec<u32>,
    col_widths: Vec<u32>,
}

impl TileLayout {
    pub fn new(row_heights: Vec<u32>, col_widths: Vec<u32>) -> Self {
        Self {
            row_heights,
            col_widths,
        }
    }

    /// The untiled 1x1 layout covering the whole frame.
    pub fn omega(dims: FrameDims) -> Self {
        Self::new(vec![dims.height], vec![dims.width])
    }

    pub fn rows(&self) -> usize {
        self.row_heights.len()
    }

    pub fn cols(&self) -> usize {
        self.col_widths.len()
    }

    pub fn tile_count(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn row_heights(&self) -> &[u32] {
        &self.row_heights
    }

    pub fn col_widths(&self) -> &[u32] {
        &self.col_widths
    }

    pub fn frame_width(&self) -> u32 {
        self.col_widths.iter().sum()
    }

    pub fn frame_height(&self) -> u32 {
        self.row_heights.iter().sum()
    }

    pub fn is_omega(&self) -> bool {
        self.tile_count() == 1
    }
}

/// One tile of a layout: row-major id plus its pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub tile_id: usize,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl TileRect {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.x + self.w, self.y + self.h)
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }
}

/// A violated layout invariant. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutViolation {
    EmptyGrid,
    RowSumMismatch { sum: u32, expected: u32 },
    ColSumMismatch { sum: u32, expected: u32 },
    MisalignedRowBoundary { offset: u32 },
    MisalignedColBoundary { offset: u32 },
    RowBelowMinimum { index: usize, height: u32, min: u32 },
    ColBelowMinimum { index: usize, width: u32, min: u32 },
}

/// Check a layout against frame dims and constraints, reporting every
/// violated invariant. The 1x1 layout is exempt from alignment and
/// minimum-dimension rules.
pub fn validate_layout(
    layout: &TileLayout,
    dims: FrameDims,
    cfg: &LayoutConfig,
) -> Vec<LayoutViolation> {
    let mut v = Vec::new();
    if layout.rows() == 0 || layout.cols() == 0 {
        v.push(LayoutViolation::EmptyGrid);
        return v;
    }
    let rsum = layout.frame_height();
    if rsum != dims.height {
        v.push(LayoutViolation::RowSumMismatch {
            sum: rsum,
            expected: dims.height,
        });
    }
    let csum = layout.frame_width();
    if csum != dims.width {
        v.push(LayoutViolation::ColSumMismatch {
            sum: csum,
            expected: dims.width,
        });
    }
    if layout.is_omega() {
        return v;
    }
    let mut off = 0;
    for (i, &h) in layout.row_heights().iter().enumerate() {
        if i + 1 < layout.rows() {
            off += h;
            if off % cfg.align != 0 {
                v.push(LayoutViolation::MisalignedRowBoundary { offset: off });
            }
        }
        if h < cfg.min_tile_h {
            v.push(LayoutViolation::RowBelowMinimum {
                index: i,
                height: h,
                min: cfg.min_tile_h,
            });
        }
    }
    let mut off = 0;
    for (i, &w) in layout.col_widths().iter().enumerate() {
        if i + 1 < layout.cols() {
            off += w;
            if off % cfg.align != 0 {
                v.push(LayoutViolation::MisalignedColBoundary { offset: off });
            }
        }
        if w < cfg.min_tile_w {
            v.push(LayoutViolation::ColBelowMinimum {
                index: i,
                width: w,
                min: cfg.min_tile_w,
            });
        }
    }
    v
}

/// Enumerate tile rectangles in row-major order; offsets are prefix sums.
pub fn tile_rects(layout: &TileLayout) -> Vec<TileRect> {
    let mut rects = Vec::with_capacity(layout.tile_count());
    let mut y = 0;
    for &h in layout.row_heights() {
        let mut x = 0;
        for &w in layout.col_widths() {
            rects.push(TileRect {
                tile_id: rects.len(),
                x,
                y,
                w,
                h,
            });
            x += w;
        }
        y += h;
    }
    rects
}

/// The set of tile ids whose rect overlaps the given half-open rect.
pub fn tiles_intersecting(layout: &TileLayout, rect: Rect) -> Result<BTreeSet<usize>> {
    if rect.is_empty()
        || rect.x2 > layout.frame_width()
        || rect.y2 > layout.frame_height()
    {
        return Err(Error::RectOutOfBounds);
    }
    let span = |bands: &[u32], lo: u32, hi: u32| -> (usize, usize) {
        let mut start = 0;
        let mut end = 0;
        let mut off = 0;
        for (i, &b) in bands.iter().enumerate() {
            let next = off + b;
            if off <= lo && lo < next {
                start = i;
            }
            // hi is exclusive; the last overlapping band contains hi-1
            if off < hi && hi <= next {
                end = i;
            }
            off = next;
        }
        (start, end)
    };
    let (r0, r1) = span(layout.row_heights(), rect.y1, rect.y2);
    let (c0, c1) = span(layout.col_widths(), rect.x1, rect.x2);
    let mut out = BTreeSet::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            out.insert(r * layout.cols() + c);
        }
    }
    Ok(out)
}

/// Build a uniform rows x cols grid. Heights and widths are as equal as
/// possible subject to alignment; remainder pixels go to the last row and
/// column.
pub fn uniform_layout(
    rows: u32,
    cols: u32,
    dims: FrameDims,
    cfg: &LayoutConfig,
) -> Result<TileLayout> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyInput("uniform grid needs rows*cols >= 1"));
    }
    if rows == 1 && cols == 1 {
        return Ok(TileLayout::omega(dims));
    }
    let split = |total: u32, n: u32, min: u32| -> Result<Vec<u32>> {
        let base = total / n / cfg.align * cfg.align;
        let last = total - base * (n - 1);
        if n > 1 && (base < min || last < min) {
            return Err(Error::GridTooFine {
                rows,
                cols,
                width: dims.width,
                height: dims.height,
            });
        }
        let mut v = vec![base; n as usize];
        *v.last_mut().unwrap() = last;
        Ok(v)
    };
    let row_heights = split(dims.height, rows, cfg.min_tile_h)?;
    let col_widths = split(dims.width, cols, cfg.min_tile_w)?;
    Ok(TileLayout::new(row_heights, col_widths))
}

/// Merge overlapping half-open intervals into maximal clusters.
fn merge_intervals(mut iv: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
    iv.sort_unstable();
    let mut out: Vec<(u32, u32)> = Vec::with_capacity(iv.len());
    for (s, e) in iv {
        match out.last_mut() {
            Some(last) if s < last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

/// Per-axis band construction: round clusters outward to the alignment
/// unit, re-merge anything that now overlaps, then keep cluster edges as
/// boundaries unless the band either side would fall below `min` (the
/// would-be band merges into its neighbor instead).
///
/// The overall hull's edges are placed before interior cluster edges, so
/// the fine-grained bands always refine the coarse-grained bands built
/// from the same boxes.
fn axis_bands(clusters: &[(u32, u32)], limit: u32, align: u32, min: u32) -> Vec<u32> {
    let rounded: Vec<(u32, u32)> = clusters
        .iter()
        .map(|&(s, e)| (s / align * align, (e.div_ceil(align) * align).min(limit)))
        .collect();
    let rounded = merge_intervals(rounded);
    let mut candidates: Vec<u32> = Vec::new();
    if let (Some(first), Some(last)) = (rounded.first(), rounded.last()) {
        candidates.push(first.0);
        candidates.push(last.1);
    }
    for (s, e) in &rounded {
        candidates.push(*s);
        candidates.push(*e);
    }
    let mut kept: Vec<u32> = Vec::new();
    for b in candidates {
        if b == 0 || b == limit || kept.contains(&b) {
            continue;
        }
        let pred = kept.iter().filter(|&&k| k < b).max().copied().unwrap_or(0);
        let succ = kept.iter().filter(|&&k| k > b).min().copied().unwrap_or(limit);
        if b - pred >= min && succ - b >= min {
            kept.push(b);
        }
    }
    kept.sort_unstable();
    let mut bands = Vec::with_capacity(kept.len() + 1);
    let mut prev = 0;
    for b in kept {
        bands.push(b - prev);
        prev = b;
    }
    bands.push(limit - prev);
    bands
}

fn box_intervals(boxes: &[BoundingBox], dims: FrameDims) -> (Vec<(u32, u32)>, Vec<(u32, u32)>) {
    let mut xs = Vec::with_capacity(boxes.len());
    let mut ys = Vec::with_capacity(boxes.len());
    for b in boxes {
        if let Some(r) = b.rect().clipped(dims) {
            xs.push((r.x1, r.x2));
            ys.push((r.y1, r.y2));
        }
    }
    (xs, ys)
}

/// Fine-grained layout: isolate clusters of boxes into their own tile
/// bands. Boxes with overlapping axis projections share a band; empty
/// margins become their own rows/columns when minimum dims allow. Never
/// places a boundary inside a box; degenerate inputs collapse toward the
/// 1x1 layout.
pub fn fine_grained_layout(
    boxes: &[BoundingBox],
    dims: FrameDims,
    cfg: &LayoutConfig,
) -> TileLayout {
    let (xs, ys) = box_intervals(boxes, dims);
    let col_widths = axis_bands(&merge_intervals(xs), dims.width, cfg.align, cfg.min_tile_w);
    let row_heights = axis_bands(&merge_intervals(ys), dims.height, cfg.align, cfg.min_tile_h);
    TileLayout::new(row_heights, col_widths)
}

/// Coarse-grained layout: a single central band per axis covering the
/// aligned hull of all boxes, giving at most a 3x3 grid.
pub fn coarse_grained_layout(
    boxes: &[BoundingBox],
    dims: FrameDims,
    cfg: &LayoutConfig,
) -> TileLayout {
    let (xs, ys) = box_intervals(boxes, dims);
    let hull = |iv: &[(u32, u32)]| -> Vec<(u32, u32)> {
        if iv.is_empty() {
            Vec::new()
        } else {
            let s = iv.iter().map(|p| p.0).min().unwrap();
            let e = iv.iter().map(|p| p.1).max().unwrap();
            vec![(s, e)]
        }
    };
    let col_widths = axis_bands(&hull(&xs), dims.width, cfg.align, cfg.min_tile_w);
    let row_heights = axis_bands(&hull(&ys), dims.height, cfg.align, cfg.min_tile_h);
    TileLayout::new(row_heights, col_widths)
}

/// Map each box to the set of tiles it intersects, in input order.
pub fn boxes_to_tiles(layout: &TileLayout, boxes: &[BoundingBox]) -> Result<Vec<BTreeSet<usize>>> {
    boxes
        .iter()
        .map(|b| tiles_intersecting(layout, b.rect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims() -> FrameDims {
        FrameDims::new(640, 320)
    }

    fn cfg() -> LayoutConfig {
        LayoutConfig::default()
    }

    fn bx(x1: u32, y1: u32, x2: u32, y2: u32) -> BoundingBox {
        BoundingBox::new(0, "car", x1, y1, x2, y2)
    }

    #[test]
    fn omega_is_valid() {
        let l = TileLayout::omega(dims());
        assert!(validate_layout(&l, dims(), &cfg()).is_empty());
        assert!(l.is_omega());
    }

    #[test]
    fn validate_accepts_aligned_2x2() {
        let l = TileLayout::new(vec![64, 256], vec![320, 320]);
        assert!(validate_layout(&l, dims(), &cfg()).is_empty());
    }

    #[test]
    fn validate_reports_narrow_and_misaligned_column() {
        let l = TileLayout::new(vec![320], vec![600, 40]);
        let v = validate_layout(&l, dims(), &cfg());
        assert!(v.contains(&LayoutViolation::MisalignedColBoundary { offset: 600 }));
        assert!(v.contains(&LayoutViolation::ColBelowMinimum {
            index: 1,
            width: 40,
            min: 64
        }));
    }

    #[test]
    fn tile_rects_row_major_prefix_sums() {
        let l = TileLayout::omega(dims());
        let r = tile_rects(&l);
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].x, r[0].y, r[0].w, r[0].h), (0, 0, 640, 320));

        let l = TileLayout::new(vec![64, 256], vec![320, 320]);
        let r = tile_rects(&l);
        assert_eq!(r.len(), 4);
        let last = r[3];
        assert_eq!((last.x, last.y, last.w, last.h), (320, 64, 320, 256));

        let l = TileLayout::new(vec![320], vec![128, 448, 64]);
        let xs: Vec<u32> = tile_rects(&l).iter().map(|t| t.x).collect();
        assert_eq!(xs, vec![0, 128, 576]);
    }

    #[test]
    fn tiles_intersecting_cases() {
        let omega = TileLayout::omega(dims());
        let t = tiles_intersecting(&omega, Rect::new(5, 5, 10, 10)).unwrap();
        assert_eq!(t, BTreeSet::from([0]));

        // Boundaries at x=320, y=64.
        let l = TileLayout::new(vec![64, 256], vec![320, 320]);
        let t = tiles_intersecting(&l, Rect::new(130, 70, 250, 190)).unwrap();
        assert_eq!(t, BTreeSet::from([2]));
        let t = tiles_intersecting(&l, Rect::new(300, 50, 340, 80)).unwrap();
        assert_eq!(t, BTreeSet::from([0, 1, 2, 3]));

        assert!(tiles_intersecting(&l, Rect::new(0, 0, 700, 10)).is_err());
    }

    #[test]
    fn uniform_layout_cases() {
        let l = uniform_layout(1, 1, dims(), &cfg()).unwrap();
        assert!(l.is_omega());

        let l = uniform_layout(2, 4, FrameDims::new(1280, 768), &cfg()).unwrap();
        assert_eq!(l.row_heights(), &[384, 384]);
        assert_eq!(l.col_widths(), &[320, 320, 320, 320]);

        // Rows of 48 < 64 minimum.
        assert!(uniform_layout(2, 2, FrameDims::new(640, 96), &cfg()).is_err());
    }

    #[test]
    fn uniform_layout_remainder_to_last() {
        let l = uniform_layout(3, 1, FrameDims::new(640, 320), &cfg()).unwrap();
        assert_eq!(l.row_heights(), &[96, 96, 128]);
        assert!(validate_layout(&l, dims(), &cfg()).is_empty());
    }

    #[test]
    fn fine_layout_empty_is_omega() {
        let l = fine_grained_layout(&[], dims(), &cfg());
        assert!(l.is_omega());
    }

    #[test]
    fn fine_layout_single_box() {
        let l = fine_grained_layout(&[bx(130, 70, 250, 190)], dims(), &cfg());
        assert_eq!(l.col_widths(), &[128, 128, 384]);
        assert_eq!(l.row_heights(), &[64, 128, 128]);
        // The box lands in exactly one tile.
        let m = boxes_to_tiles(&l, &[bx(130, 70, 250, 190)]).unwrap();
        assert_eq!(m[0].len(), 1);
    }

    #[test]
    fn fine_layout_two_clusters() {
        let boxes = [bx(130, 70, 250, 190), bx(450, 70, 570, 190)];
        let l = fine_grained_layout(&boxes, dims(), &cfg());
        assert_eq!(l.col_widths(), &[128, 128, 192, 128, 64]);
        assert_eq!(l.row_heights(), &[64, 128, 128]);
    }

    #[test]
    fn coarse_layout_cases() {
        assert!(coarse_grained_layout(&[], dims(), &cfg()).is_omega());

        let l = coarse_grained_layout(&[bx(130, 70, 250, 190)], dims(), &cfg());
        assert_eq!(l.col_widths(), &[128, 128, 384]);
        assert_eq!(l.row_heights(), &[64, 128, 128]);

        let boxes = [bx(130, 70, 250, 190), bx(450, 70, 570, 190)];
        let l = coarse_grained_layout(&boxes, dims(), &cfg());
        assert_eq!(l.col_widths(), &[128, 448, 64]);
        assert_eq!(l.row_heights(), &[64, 128, 128]);
        assert!(l.tile_count() <= 9);
    }

    #[test]
    fn boxes_to_tiles_omega_maps_all_to_zero() {
        let omega = TileLayout::omega(dims());
        let m = boxes_to_tiles(&omega, &[bx(0, 0, 10, 10), bx(500, 200, 600, 300)]).unwrap();
        assert!(m.iter().all(|s| *s == BTreeSet::from([0])));
    }

    #[test]
    fn boxes_to_tiles_straddle() {
        let l = TileLayout::new(vec![160, 160], vec![320, 320]);
        let m = boxes_to_tiles(&l, &[bx(300, 10, 340, 50)]).unwrap();
        assert_eq!(m[0], BTreeSet::from([0, 1]));
    }

    // Brute-force helper: the tile containing a pixel, by band scan.
    fn tile_of_pixel(layout: &TileLayout, x: u32, y: u32) -> usize {
        let find = |bands: &[u32], v: u32| -> usize {
            let mut off = 0;
            for (i, &b) in bands.iter().enumerate() {
                if v < off + b {
                    return i;
                }
                off += b;
            }
            bands.len() - 1
        };
        find(layout.row_heights(), y) * layout.cols() + find(layout.col_widths(), x)
    }

    fn boundary_crosses_box(layout: &TileLayout, b: &BoundingBox) -> bool {
        let mut off = 0;
        for &w in layout.col_widths().iter().take(layout.cols() - 1) {
            off += w;
            if b.x1 < off && off < b.x2 {
                return true;
            }
        }
        let mut off = 0;
        for &h in layout.row_heights().iter().take(layout.rows() - 1) {
            off += h;
            if b.y1 < off && off < b.y2 {
                return true;
            }
        }
        false
    }

    fn small_cfg() -> LayoutConfig {
        LayoutConfig {
            align: 8,
            min_tile_w: 16,
            min_tile_h: 16,
        }
    }

    proptest! {
        #[test]
        fn prop_layouts_partition_frame(
            rows in 1u32..5, cols in 1u32..5,
            wq in 2u32..10, hq in 2u32..10,
        ) {
            let d = FrameDims::new(wq * 64, hq * 64);
            if let Ok(l) = uniform_layout(rows, cols, d, &cfg()) {
                let rects = tile_rects(&l);
                let total: u64 = rects.iter().map(|t| t.area()).sum();
                prop_assert_eq!(total, d.area());
                for a in &rects {
                    for b in &rects {
                        if a.tile_id != b.tile_id {
                            prop_assert!(!a.rect().intersects(&b.rect()));
                        }
                    }
                }
            }
        }

        #[test]
        fn prop_fine_and_coarse_never_cross_boxes(
            boxes in prop::collection::vec((0u32..300, 0u32..140, 1u32..60, 1u32..60), 0..8)
        ) {
            let d = FrameDims::new(320, 160);
            let c = small_cfg();
            let boxes: Vec<BoundingBox> = boxes
                .into_iter()
                .map(|(x, y, w, h)| bx(x, y, (x + w).min(320), (y + h).min(160)))
                .filter(|b| !b.rect().is_empty())
                .collect();
            for l in [fine_grained_layout(&boxes, d, &c), coarse_grained_layout(&boxes, d, &c)] {
                prop_assert!(validate_layout(&l, d, &c).is_empty());
                for b in &boxes {
                    prop_assert!(!boundary_crosses_box(&l, b), "layout {:?} crosses {:?}", l, b);
                }
            }
        }

        #[test]
        fn prop_fine_covers_no_more_box_area_than_coarse(
            boxes in prop::collection::vec((0u32..300, 0u32..140, 1u32..60, 1u32..60), 1..8)
        ) {
            let d = FrameDims::new(320, 160);
            let c = small_cfg();
            let boxes: Vec<BoundingBox> = boxes
                .into_iter()
                .map(|(x, y, w, h)| bx(x, y, (x + w).min(320), (y + h).min(160)))
                .filter(|b| !b.rect().is_empty())
                .collect();
            let covered = |l: &TileLayout| -> u64 {
                let rects = tile_rects(l);
                let mut ids = BTreeSet::new();
                for b in &boxes {
                    ids.extend(tiles_intersecting(l, b.rect()).unwrap());
                }
                ids.iter().map(|&i| rects[i].area()).sum()
            };
            let fine = fine_grained_layout(&boxes, d, &c);
            let coarse = coarse_grained_layout(&boxes, d, &c);
            prop_assert!(covered(&fine) <= covered(&coarse));
        }

        #[test]
        fn prop_tiles_intersecting_matches_pixel_scan(
            rows in 1u32..4, cols in 1u32..4,
            x1 in 0u32..63, y1 in 0u32..63,
            w in 1u32..64, h in 1u32..64,
        ) {
            let d = FrameDims::new(64, 64);
            let c = LayoutConfig { align: 8, min_tile_w: 8, min_tile_h: 8 };
            let l = match uniform_layout(rows, cols, d, &c) {
                Ok(l) => l,
                Err(_) => return Ok(()),
            };
            let r = Rect::new(x1, y1, (x1 + w).min(64), (y1 + h).min(64));
            if r.is_empty() {
                return Ok(());
            }
            let got = tiles_intersecting(&l, r).unwrap();
            let mut want = BTreeSet::new();
            for y in r.y1..r.y2 {
                for x in r.x1..r.x2 {
                    want.insert(tile_of_pixel(&l, x, y));
                }
            }
            prop_assert_eq!(got, want);
        }
    }
}
