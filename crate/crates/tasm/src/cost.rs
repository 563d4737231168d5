//! What-if cost model for queries over tiled segments.
//!
//! The estimated cost of running query `q` over a segment with layout `L`
//! is `beta * P + gamma * T`, where `P` is the number of pixels decoded
//! and `T` the number of tile chunks decoded. Decoding any tile of a GOP
//! starts at its keyframe, so `P` charges every decoded tile from frame 0
//! of the GOP through the last requested frame.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{tile_rects, tiles_intersecting, TileLayout};
use crate::index::SemanticIndex;
use crate::query::QuerySpec;

/// Linear model coefficients, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Seconds per decoded pixel.
    pub beta: f64,
    /// Seconds per decoded tile-GOP chunk.
    pub gamma: f64,
    /// Seconds per encoded pixel (re-encode model).
    pub enc_beta: f64,
    /// Seconds per tile chunk created (re-encode model).
    pub enc_fixed: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            beta: 2e-9,
            gamma: 1e-4,
            enc_beta: 5e-9,
            enc_fixed: 0.0,
        }
    }
}

/// Pixel and tile counts with their modeled cost in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub pixels: u64,
    pub tiles: u64,
    pub cost: f64,
}

fn intersect(a: &Range<u32>, b: &Range<u32>) -> Range<u32> {
    a.start.max(b.start)..a.end.min(b.end)
}

/// Pixel and tile counts for `q` over one segment under layout `layout`.
///
/// Tiles are those intersecting any box matching the predicate within the
/// segment-and-range intersection; each decoded tile is charged from the
/// GOP keyframe through the last requested frame.
pub fn decode_counts(
    index: &SemanticIndex,
    q: &QuerySpec,
    sot_range: Range<u32>,
    layout: &TileLayout,
) -> Result<(u64, u64)> {
    let (_dims, video_len) = index.video_dims(&q.video)?;
    let eff = intersect(&q.effective_range(video_len), &sot_range);
    if eff.start >= eff.end {
        return Ok((0, 0));
    }
    let entries = index.lookup(&q.video, &q.predicate, Some(eff.clone()))?;
    if entries.is_empty() {
        return Ok((0, 0));
    }
    let mut tiles: BTreeSet<usize> = BTreeSet::new();
    for e in &entries {
        tiles.extend(tiles_intersecting(layout, e.bbox.rect())?);
    }
    let frames_decoded = (eff.end - sot_range.start) as u64;
    let rects = tile_rects(layout);
    let pixels = tiles
        .iter()
        .map(|&t| rects[t].area() * frames_decoded)
        .sum();
    Ok((pixels, tiles.len() as u64))
}

pub fn pixels_decoded(
    index: &SemanticIndex,
    q: &QuerySpec,
    sot_range: Range<u32>,
    layout: &TileLayout,
) -> Result<u64> {
    Ok(decode_counts(index, q, sot_range, layout)?.0)
}

pub fn tiles_decoded(
    index: &SemanticIndex,
    q: &QuerySpec,
    sot_range: Range<u32>,
    layout: &TileLayout,
) -> Result<u64> {
    Ok(decode_counts(index, q, sot_range, layout)?.1)
}

/// Combine decode counts with the linear model.
pub fn estimate_cost(
    index: &SemanticIndex,
    q: &QuerySpec,
    sot_range: Range<u32>,
    layout: &TileLayout,
    params: &CostParams,
) -> Result<CostEstimate> {
    let (pixels, tiles) = decode_counts(index, q, sot_range, layout)?;
    Ok(CostEstimate {
        pixels,
        tiles,
        cost: params.beta * pixels as f64 + params.gamma * tiles as f64,
    })
}

/// Estimated time saved (positive) by running `q` under `alt` instead of
/// `current` on one segment: `C(current) - C(alt)`.
pub fn delta(
    index: &SemanticIndex,
    q: &QuerySpec,
    current: &TileLayout,
    alt: &TileLayout,
    sot_range: Range<u32>,
    params: &CostParams,
) -> Result<f64> {
    let a = estimate_cost(index, q, sot_range.clone(), current, params)?;
    let b = estimate_cost(index, q, sot_range, alt, params)?;
    Ok(a.cost - b.cost)
}

/// Modeled cost of re-encoding a segment of `gop_frames` frames of
/// `frame_area` pixels each under `layout`. Zero only applies when the
/// layout does not change, which callers account for themselves.
pub fn reencode_cost(frame_area: u64, gop_frames: u32, layout: &TileLayout, params: &CostParams) -> f64 {
    params.enc_beta * (frame_area as f64 * gop_frames as f64)
        + params.enc_fixed * layout.tile_count() as f64
}

/// The not-tiling rule: keep `layout` only when its decoded-pixel total
/// over the workload is at most `alpha` times the untiled total. The
/// boundary is inclusive.
pub fn should_tile(
    index: &SemanticIndex,
    workload: &[QuerySpec],
    sot_range: Range<u32>,
    layout: &TileLayout,
    alpha: f64,
) -> Result<bool> {
    let (dims, _) = if let Some(q) = workload.first() {
        index.video_dims(&q.video)?
    } else {
        return Ok(true);
    };
    let omega = TileLayout::omega(dims);
    let mut p_layout = 0u64;
    let mut p_omega = 0u64;
    for q in workload {
        p_layout += pixels_decoded(index, q, sot_range.clone(), layout)?;
        p_omega += pixels_decoded(index, q, sot_range.clone(), &omega)?;
    }
    Ok(p_layout as f64 <= alpha * p_omega as f64)
}

/// One decode-time measurement for calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub pixels: f64,
    pub tiles: f64,
    pub seconds: f64,
}

/// Fitted decode coefficients with goodness of fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub beta: f64,
    pub gamma: f64,
    pub r_squared: f64,
    /// True when a negative fitted coefficient was clamped to zero.
    pub clamped: bool,
}

/// Least-squares fit of `seconds = beta * pixels + gamma * tiles` with no
/// intercept. Negative coefficients are clamped to zero (flagged in the
/// result). Errors on fewer than two samples or a collinear design.
pub fn calibrate(samples: &[CalibrationSample]) -> Result<Calibration> {
    if samples.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    // Column scaling keeps the normal equations well conditioned; pixel
    // counts dwarf tile counts by many orders of magnitude.
    let p_scale = samples.iter().map(|s| s.pixels.abs()).fold(0.0, f64::max);
    let t_scale = samples.iter().map(|s| s.tiles.abs()).fold(0.0, f64::max);
    if p_scale == 0.0 || t_scale == 0.0 {
        return Err(Error::Calibration(
            "samples never vary in pixels or tiles".to_string(),
        ));
    }
    let (mut spp, mut spt, mut stt, mut spy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let p = s.pixels / p_scale;
        let t = s.tiles / t_scale;
        spp += p * p;
        spt += p * t;
        stt += t * t;
        spy += p * s.seconds;
        sty += t * s.seconds;
    }
    let det = spp * stt - spt * spt;
    if !det.is_finite() || det.abs() <= 1e-12 * spp * stt {
        return Err(Error::Calibration(
            "degenerate or collinear sample set".to_string(),
        ));
    }
    let mut beta = (spy * stt - sty * spt) / det / p_scale;
    let mut gamma = (sty * spp - spy * spt) / det / t_scale;
    let mut clamped = false;
    if beta < 0.0 {
        beta = 0.0;
        clamped = true;
    }
    if gamma < 0.0 {
        gamma = 0.0;
        clamped = true;
    }
    let mean_y: f64 = samples.iter().map(|s| s.seconds).sum::<f64>() / samples.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for s in samples {
        let pred = beta * s.pixels + gamma * s.tiles;
        ss_res += (s.seconds - pred) * (s.seconds - pred);
        ss_tot += (s.seconds - mean_y) * (s.seconds - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(Calibration {
        beta,
        gamma,
        r_squared,
        clamped,
    })
}

/// Read calibration samples from a CSV file with header `pixels,tiles,seconds`.
pub fn read_calibration_csv(path: impl AsRef<Path>) -> Result<Vec<CalibrationSample>> {
    let corrupt = |detail: String| Error::Corrupt {
        what: "calibration csv",
        detail,
    };
    let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(|e| corrupt(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| corrupt(e.to_string()))?.clone();
    let expect = ["pixels", "tiles", "seconds"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(corrupt(format!(
            "expected header pixels,tiles,seconds, got {:?}",
            headers
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| corrupt(e.to_string()))?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| corrupt("missing field".to_string()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| corrupt(e.to_string()))
        };
        out.push(CalibrationSample {
            pixels: field(0)?,
            tiles: field(1)?,
            seconds: field(2)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fine_grained_layout, BoundingBox, FrameDims, LayoutConfig};
    use crate::query::LabelPredicate;
    use tempfile::tempdir;

    // One car box isolated in a 128x128 tile on a 640x320 video, 30-frame GOP.
    fn worked_example() -> (tempfile::TempDir, SemanticIndex, TileLayout, QuerySpec) {
        let dir = tempdir().unwrap();
        let idx = SemanticIndex::open(dir.path()).unwrap();
        let dims = FrameDims::new(640, 320);
        idx.register_video("v", dims, 30).unwrap();
        for f in 0..30 {
            idx.add_metadata("v", f, "car", 130, 70, 250, 190).unwrap();
        }
        let boxes: Vec<BoundingBox> = (0..30)
            .map(|f| BoundingBox::new(f, "car", 130, 70, 250, 190))
            .collect();
        let layout = fine_grained_layout(&boxes, dims, &LayoutConfig::default());
        let q = QuerySpec::new("v", LabelPredicate::single("car"), Some(0..30));
        (dir, idx, layout, q)
    }

    #[test]
    fn pixels_zero_without_matches() {
        let (_d, idx, layout, _q) = worked_example();
        let q = QuerySpec::new("v", LabelPredicate::single("person"), Some(0..30));
        assert_eq!(pixels_decoded(&idx, &q, 0..30, &layout).unwrap(), 0);
        assert_eq!(tiles_decoded(&idx, &q, 0..30, &layout).unwrap(), 0);
    }

    #[test]
    fn pixels_isolated_tile_full_gop() {
        let (_d, idx, layout, q) = worked_example();
        assert_eq!(pixels_decoded(&idx, &q, 0..30, &layout).unwrap(), 128 * 128 * 30);
        assert_eq!(tiles_decoded(&idx, &q, 0..30, &layout).unwrap(), 1);
    }

    #[test]
    fn pixels_omega_full_gop() {
        let (_d, idx, _layout, q) = worked_example();
        let omega = TileLayout::omega(FrameDims::new(640, 320));
        assert_eq!(pixels_decoded(&idx, &q, 0..30, &omega).unwrap(), 640 * 320 * 30);
        assert_eq!(tiles_decoded(&idx, &q, 0..30, &omega).unwrap(), 1);
    }

    #[test]
    fn tiles_straddling_uniform_center() {
        let dir = tempdir().unwrap();
        let idx = SemanticIndex::open(dir.path()).unwrap();
        let dims = FrameDims::new(640, 320);
        idx.register_video("v", dims, 30).unwrap();
        idx.add_metadata("v", 0, "car", 300, 140, 340, 180).unwrap();
        let layout = crate::geometry::uniform_layout(2, 2, dims, &LayoutConfig::default()).unwrap();
        let q = QuerySpec::new("v", LabelPredicate::single("car"), Some(0..30));
        assert_eq!(tiles_decoded(&idx, &q, 0..30, &layout).unwrap(), 4);
    }

    #[test]
    fn estimate_matches_worked_numbers() {
        let (_d, idx, layout, q) = worked_example();
        let params = CostParams::default();
        let fine = estimate_cost(&idx, &q, 0..30, &layout, &params).unwrap();
        assert_eq!(fine.pixels, 491_520);
        assert_eq!(fine.tiles, 1);
        assert!((fine.cost - 1.083e-3).abs() < 1e-6);

        let omega = TileLayout::omega(FrameDims::new(640, 320));
        let full = estimate_cost(&idx, &q, 0..30, &omega, &params).unwrap();
        assert_eq!(full.pixels, 6_144_000);
        assert!((full.cost - 1.2388e-2).abs() < 1e-6);
    }

    #[test]
    fn delta_identity_antisymmetry_telescoping() {
        let (_d, idx, layout, q) = worked_example();
        let params = CostParams::default();
        let omega = TileLayout::omega(FrameDims::new(640, 320));
        assert_eq!(delta(&idx, &q, &layout, &layout, 0..30, &params).unwrap(), 0.0);
        let d1 = delta(&idx, &q, &omega, &layout, 0..30, &params).unwrap();
        let d2 = delta(&idx, &q, &layout, &omega, 0..30, &params).unwrap();
        assert!((d1 + d2).abs() < 1e-15);
        assert!((d1 - 1.1305e-2).abs() < 1e-6);

        let uniform =
            crate::geometry::uniform_layout(2, 2, FrameDims::new(640, 320), &LayoutConfig::default())
                .unwrap();
        let ab = delta(&idx, &q, &omega, &uniform, 0..30, &params).unwrap();
        let bc = delta(&idx, &q, &uniform, &layout, 0..30, &params).unwrap();
        let ac = delta(&idx, &q, &omega, &layout, 0..30, &params).unwrap();
        assert!((ab + bc - ac).abs() < 1e-12);
    }

    #[test]
    fn reencode_cost_linear() {
        let params = CostParams::default();
        let omega = TileLayout::omega(FrameDims::new(640, 320));
        let r = reencode_cost(640 * 320, 30, &omega, &params);
        assert!((r - 3.072e-2).abs() < 1e-12);
        let r2 = reencode_cost(640 * 320, 60, &omega, &params);
        assert!((r2 - 2.0 * r).abs() < 1e-12);
    }

    #[test]
    fn should_tile_boundary_inclusive() {
        let (_d, idx, layout, q) = worked_example();
        // Ratio 0.08 passes at alpha = 0.8.
        assert!(should_tile(&idx, &[q.clone()], 0..30, &layout, 0.8).unwrap());
        // Omega vs omega is ratio 1.0: inclusive boundary at alpha = 1.0.
        let omega = TileLayout::omega(FrameDims::new(640, 320));
        assert!(should_tile(&idx, &[q.clone()], 0..30, &omega, 1.0).unwrap());
        assert!(!should_tile(&idx, &[q], 0..30, &omega, 0.8).unwrap());
    }

    #[test]
    fn calibrate_recovers_exact_linear_model() {
        let mut samples = Vec::new();
        for i in 1..40u64 {
            let p = (i * 137_911) as f64;
            let t = ((i * 7) % 23 + 1) as f64;
            samples.push(CalibrationSample {
                pixels: p,
                tiles: t,
                seconds: 2e-9 * p + 1e-4 * t,
            });
        }
        let c = calibrate(&samples).unwrap();
        assert!(((c.beta - 2e-9) / 2e-9).abs() < 1e-12, "beta {}", c.beta);
        assert!(((c.gamma - 1e-4) / 1e-4).abs() < 1e-12, "gamma {}", c.gamma);
        assert!(c.r_squared > 1.0 - 1e-9);
        assert!(!c.clamped);
    }

    #[test]
    fn calibrate_rejects_degenerate_sets() {
        assert!(calibrate(&[]).is_err());
        let s = CalibrationSample {
            pixels: 100.0,
            tiles: 1.0,
            seconds: 0.5,
        };
        assert!(calibrate(&[s]).is_err());
        assert!(calibrate(&[s, s, s]).is_err());
    }

    #[test]
    fn calibration_csv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        std::fs::write(&path, "pixels,tiles,seconds\n1000,1,0.001\n2000,2,0.002\n").unwrap();
        let samples = read_calibration_csv(&path).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].pixels, 2000.0);
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(read_calibration_csv(&path).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn prop_decode_counts_match_brute_force(
            boxes in prop::collection::vec((0u32..12, 0u32..56, 0u32..56, 1u32..20, 1u32..20), 0..12),
            rows in 1u32..4, cols in 1u32..4,
            qlo in 0u32..12, qspan in 1u32..12,
        ) {
            let dims = FrameDims::new(64, 64);
            let cfg = LayoutConfig { align: 8, min_tile_w: 8, min_tile_h: 8 };
            let dir = tempdir().unwrap();
            let idx = SemanticIndex::open(dir.path()).unwrap();
            idx.register_video("v", dims, 12).unwrap();
            for (f, x, y, w, h) in boxes {
                let (x2, y2) = ((x + w).min(64), (y + h).min(64));
                if x2 > x && y2 > y {
                    idx.add_metadata("v", f, "car", x, y, x2, y2).unwrap();
                }
            }
            let layout = match crate::geometry::uniform_layout(rows, cols, dims, &cfg) {
                Ok(l) => l,
                Err(_) => return Ok(()),
            };
            let range = qlo.min(11)..(qlo + qspan).min(12);
            prop_assume!(range.start < range.end);
            let q = QuerySpec::new("v", LabelPredicate::single("car"), Some(range.clone()));
            // The SOT covers the whole 12-frame video.
            let (p, t) = decode_counts(&idx, &q, 0..12, &layout).unwrap();

            // Brute force: enumerate every (frame, tile) pair and check
            // whether some matching box on that frame intersects the tile.
            let entries = idx.lookup("v", &q.predicate, Some(range.clone())).unwrap();
            let rects = tile_rects(&layout);
            let mut needed = std::collections::BTreeSet::new();
            for f in range.clone() {
                for tr in &rects {
                    if entries
                        .iter()
                        .any(|e| e.bbox.frame == f && e.bbox.rect().intersects(&tr.rect()))
                    {
                        needed.insert(tr.tile_id);
                    }
                }
            }
            let frames_decoded = if entries.is_empty() { 0 } else { range.end as u64 };
            let want_p: u64 = needed.iter().map(|&i| rects[i].area() * frames_decoded).sum();
            prop_assert_eq!(p, want_p);
            prop_assert_eq!(t, needed.len() as u64);
        }
    }
}
