//! On-disk tiled video store.
//!
//! A video lives under `<root>/<video>/` as one chunk file per (SOT, tile)
//! plus a text manifest. Chunk directories follow
//! `frames_<first>-<last>/tile<k>.chk` with an inclusive last frame;
//! retiling writes a `.v<n>`-suffixed sibling directory and then swaps the
//! manifest, so a crash or concurrent reader always sees one complete
//! layout version. Scans decode only the tiles that contain matching
//! boxes, reporting their work to the global decode counters.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::Instant;

use crate::codec::{decode_tile_chunk, encode_tile_chunk, DecodedTile};
use crate::counters;
use crate::error::{Error, Result};
use crate::geometry::{
    tile_rects, tiles_intersecting, validate_layout, FrameDims, LayoutConfig, Rect, TileLayout,
};
use crate::index::SemanticIndex;
use crate::manifest::{Manifest, SotRecord, MANIFEST_FILE};
use crate::query::LabelPredicate;
use crate::y8::FrameSeq;

/// How to tile a video at ingest.
#[derive(Debug, Clone)]
pub enum LayoutPlan {
    /// Every GOP untiled (the 1x1 layout).
    Untiled,
    /// One layout for every GOP.
    Fixed(TileLayout),
    /// One layout per GOP, in order.
    PerGop(Vec<TileLayout>),
}

/// Pixels of one labeled box cropped from decoded tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelRegion {
    pub frame: u32,
    pub label: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub pixels: Vec<u8>,
}

/// Which tile chunks an annotate pass re-encoded vs reused verbatim,
/// as (sot index, tile id) pairs.
#[derive(Debug, Clone, Default)]
pub struct AnnotateStats {
    pub reencoded: Vec<(usize, usize)>,
    pub reused: Vec<(usize, usize)>,
}

/// A tiled video store rooted at `<root>/<name>/`.
pub struct VideoStore {
    root: PathBuf,
    name: String,
    video_dir: PathBuf,
    state: RwLock<Manifest>,
    retiling: Mutex<HashSet<usize>>,
}

pub(crate) fn validate_video_name(name: &str) -> Result<()> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
    {
        return Err(Error::InvalidVideoName(name.to_string()));
    }
    Ok(())
}

impl VideoStore {
    /// Encode raw frames into a fresh tiled store.
    pub fn ingest(
        root: impl AsRef<Path>,
        name: &str,
        frames: &FrameSeq,
        gop_len: u32,
        plan: &LayoutPlan,
        cfg: &LayoutConfig,
    ) -> Result<Self> {
        validate_video_name(name)?;
        let root = root.as_ref().to_path_buf();
        let length = frames.frame_count();
        if length == 0 {
            return Err(Error::EmptyInput("no frames to ingest"));
        }
        if gop_len == 0 {
            return Err(Error::EmptyInput("gop_len must be >= 1"));
        }
        let dims = frames.dims;
        dims.validate(cfg)?;
        let n_sots = length.div_ceil(gop_len) as usize;
        let layouts: Vec<TileLayout> = match plan {
            LayoutPlan::Untiled => vec![TileLayout::omega(dims); n_sots],
            LayoutPlan::Fixed(l) => vec![l.clone(); n_sots],
            LayoutPlan::PerGop(ls) => {
                if ls.len() != n_sots {
                    return Err(Error::EmptyInput("per-GOP plan length mismatch"));
                }
                ls.clone()
            }
        };
        for layout in &layouts {
            let v = validate_layout(layout, dims, cfg);
            if !v.is_empty() {
                return Err(Error::InvalidLayout(v));
            }
        }
        let video_dir = root.join(name);
        if video_dir.exists() {
            return Err(Error::VideoExists(name.to_string()));
        }
        fs::create_dir_all(&video_dir)?;
        let mut sots = Vec::with_capacity(n_sots);
        for (i, layout) in layouts.into_iter().enumerate() {
            let start = i as u32 * gop_len;
            let end = (start + gop_len).min(length);
            let frame_range = start..end;
            let dir = SotRecord::dir_name(&frame_range, 1);
            let bufs: Vec<&[u8]> = (start..end).map(|f| frames.frame(f)).collect();
            write_sot_chunks(&video_dir, &dir, &layout, &bufs, dims)?;
            sots.push(SotRecord {
                frame_range,
                layout,
                dir,
                layout_version: 1,
            });
        }
        let manifest = Manifest {
            dims,
            gop_len,
            length,
            sots,
        };
        manifest.write_atomic(&video_dir)?;
        Ok(Self {
            root,
            name: name.to_string(),
            video_dir,
            state: RwLock::new(manifest),
            retiling: Mutex::new(HashSet::new()),
        })
    }

    /// Open an existing store, discarding chunk dirs left behind by
    /// interrupted retiles.
    pub fn open(root: impl AsRef<Path>, name: &str) -> Result<Self> {
        validate_video_name(name)?;
        let root = root.as_ref().to_path_buf();
        let video_dir = root.join(name);
        if !video_dir.join(MANIFEST_FILE).exists() {
            return Err(Error::UnknownVideo(name.to_string()));
        }
        let manifest = Manifest::load(&video_dir)?;
        let referenced: HashSet<&str> = manifest.sots.iter().map(|s| s.dir.as_str()).collect();
        for entry in fs::read_dir(&video_dir)? {
            let entry = entry?;
            let fname = entry.file_name();
            let fname = fname.to_string_lossy();
            if entry.file_type()?.is_dir()
                && fname.starts_with("frames_")
                && !referenced.contains(fname.as_ref())
            {
                fs::remove_dir_all(entry.path())?;
            }
        }
        Ok(Self {
            root,
            name: name.to_string(),
            video_dir,
            state: RwLock::new(manifest),
            retiling: Mutex::new(HashSet::new()),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn video_dir(&self) -> &Path {
        &self.video_dir
    }

    pub fn dims(&self) -> FrameDims {
        self.state.read().unwrap().dims
    }

    pub fn gop_len(&self) -> u32 {
        self.state.read().unwrap().gop_len
    }

    pub fn frame_count(&self) -> u32 {
        self.state.read().unwrap().length
    }

    pub fn sot_count(&self) -> usize {
        self.state.read().unwrap().sots.len()
    }

    /// Snapshot of the current manifest.
    pub fn manifest(&self) -> Manifest {
        self.state.read().unwrap().clone()
    }

    /// Register this video's dims and length with a semantic index.
    pub fn register_with(&self, index: &SemanticIndex) -> Result<()> {
        let m = self.manifest();
        index.register_video(&self.name, m.dims, m.length)
    }

    /// Total bytes of chunk files referenced by the current manifest.
    pub fn store_bytes(&self) -> Result<u64> {
        let m = self.manifest();
        let mut total = 0;
        for sot in &m.sots {
            for t in 0..sot.layout.tile_count() {
                total += fs::metadata(sot.chunk_path(&self.video_dir, t))?.len();
            }
        }
        Ok(total)
    }

    fn resolve_range(&self, m: &Manifest, range: Option<Range<u32>>) -> Result<Range<u32>> {
        match range {
            Some(r) => {
                if r.start >= r.end || r.end > m.length {
                    Err(Error::RangeOutOfBounds {
                        start: r.start,
                        end: r.end,
                        len: m.length,
                    })
                } else {
                    Ok(r)
                }
            }
            None => Ok(0..m.length),
        }
    }

    /// Subframe selection: return the pixels of every box matching `pred`
    /// within `range`, decoding only the tiles those boxes intersect.
    /// Output is ordered by (frame, label, x, y).
    pub fn scan(
        &self,
        index: &SemanticIndex,
        pred: &LabelPredicate,
        range: Option<Range<u32>>,
    ) -> Result<Vec<PixelRegion>> {
        let m = self.manifest();
        let range = self.resolve_range(&m, range)?;
        let entries = index.lookup(&self.name, pred, Some(range.clone()))?;
        let mut by_sot: BTreeMap<usize, Vec<&crate::index::IndexEntry>> = BTreeMap::new();
        for e in &entries {
            let sot_idx = m.sot_of_frame(e.bbox.frame).ok_or(Error::FrameOutOfRange {
                frame: e.bbox.frame,
                len: m.length,
            })?;
            by_sot.entry(sot_idx).or_default().push(e);
        }
        let mut regions = Vec::with_capacity(entries.len());
        for (sot_idx, sot_entries) in by_sot {
            let sot = &m.sots[sot_idx];
            let rects = tile_rects(&sot.layout);
            let mut needed: BTreeSet<usize> = BTreeSet::new();
            let mut entry_tiles: Vec<BTreeSet<usize>> = Vec::with_capacity(sot_entries.len());
            for e in &sot_entries {
                let tiles = tiles_intersecting(&sot.layout, e.bbox.rect())?;
                needed.extend(tiles.iter().copied());
                entry_tiles.push(tiles);
            }
            let frames_to_decode = range.end.min(sot.frame_range.end) - sot.frame_range.start;
            let mut decoded: HashMap<usize, DecodedTile> = HashMap::new();
            for &t in &needed {
                decoded.insert(
                    t,
                    decode_chunk_counted(&sot.chunk_path(&self.video_dir, t), frames_to_decode)?,
                );
            }
            for (e, tiles) in sot_entries.iter().zip(&entry_tiles) {
                let r = e.bbox.rect();
                let rel = (e.bbox.frame - sot.frame_range.start) as usize;
                let mut pixels = vec![0u8; r.area() as usize];
                for &t in tiles {
                    let tr = rects[t].rect();
                    let o = r.intersection(&tr).expect("tile listed but disjoint");
                    let src = &decoded[&t].frames[rel];
                    copy_rect(src, tr, &o, &mut pixels, r);
                }
                regions.push(PixelRegion {
                    frame: e.bbox.frame,
                    label: e.bbox.label.clone(),
                    x: r.x1,
                    y: r.y1,
                    w: r.width(),
                    h: r.height(),
                    pixels,
                });
            }
        }
        regions.sort_by(|a, b| {
            (a.frame, &a.label, a.x, a.y, a.w, a.h).cmp(&(b.frame, &b.label, b.x, b.y, b.w, b.h))
        });
        Ok(regions)
    }

    /// Replace one SOT's chunks with a new layout, atomically. Content is
    /// preserved exactly; the layout version is bumped even when the grid
    /// is unchanged.
    pub fn retile(&self, sot_idx: usize, new_layout: &TileLayout, cfg: &LayoutConfig) -> Result<SotRecord> {
        let m = self.manifest();
        let dims = m.dims;
        let v = validate_layout(new_layout, dims, cfg);
        if !v.is_empty() {
            return Err(Error::InvalidLayout(v));
        }
        let sot = m.sots.get(sot_idx).ok_or(Error::UnknownSot(sot_idx))?.clone();
        let _guard = RetileGuard::acquire(&self.retiling, sot_idx)?;

        let frames = self.decode_sot_frames(&sot, dims)?;
        let new_version = sot.layout_version + 1;
        let new_dir = SotRecord::dir_name(&sot.frame_range, new_version);
        let bufs: Vec<&[u8]> = frames.iter().map(|f| f.as_slice()).collect();
        write_sot_chunks(&self.video_dir, &new_dir, new_layout, &bufs, dims)?;

        let record = SotRecord {
            frame_range: sot.frame_range.clone(),
            layout: new_layout.clone(),
            dir: new_dir,
            layout_version: new_version,
        };
        let mut state = self.state.write().unwrap();
        state.sots[sot_idx] = record.clone();
        state.write_atomic(&self.video_dir)?;
        Ok(record)
    }

    /// Decode every tile of a SOT and reassemble its full frames.
    fn decode_sot_frames(&self, sot: &SotRecord, dims: FrameDims) -> Result<Vec<Vec<u8>>> {
        let n = sot.gop_frames();
        let mut frames = vec![vec![0u8; dims.area() as usize]; n as usize];
        for t in 0..sot.layout.tile_count() {
            let decoded = decode_chunk_counted(&sot.chunk_path(&self.video_dir, t), n)?;
            let h = decoded.header;
            for (rel, raster) in decoded.frames.iter().enumerate() {
                blit(raster, h.w, frames[rel].as_mut_slice(), dims.width, h.x, h.y, h.h);
            }
        }
        Ok(frames)
    }

    /// Reassemble full frames for a range by decoding every tile.
    pub fn stitch(&self, range: Option<Range<u32>>) -> Result<FrameSeq> {
        let m = self.manifest();
        let range = self.resolve_range(&m, range)?;
        let dims = m.dims;
        let mut out = FrameSeq::new(dims, range.end - range.start);
        for sot in &m.sots {
            let eff = range.start.max(sot.frame_range.start)..range.end.min(sot.frame_range.end);
            if eff.start >= eff.end {
                continue;
            }
            let frames_to_decode = eff.end - sot.frame_range.start;
            for t in 0..sot.layout.tile_count() {
                let decoded =
                    decode_chunk_counted(&sot.chunk_path(&self.video_dir, t), frames_to_decode)?;
                let h = decoded.header;
                for f in eff.clone() {
                    let rel = (f - sot.frame_range.start) as usize;
                    blit(
                        &decoded.frames[rel],
                        h.w,
                        out.frame_mut(f - range.start),
                        dims.width,
                        h.x,
                        h.y,
                        h.h,
                    );
                }
            }
        }
        Ok(out)
    }

    /// Draw 1-px borders around boxes of the given labels and return the
    /// stitched frames for `range`. The annotated video is written as a
    /// new store under `out_root`: tile chunks intersecting matching boxes
    /// are decoded and re-encoded, all others are copied verbatim.
    pub fn annotate_and_stitch(
        &self,
        index: &SemanticIndex,
        labels: &BTreeSet<String>,
        range: Option<Range<u32>>,
        box_value: u8,
        out_root: impl AsRef<Path>,
    ) -> Result<(FrameSeq, AnnotateStats)> {
        let m = self.manifest();
        let range = self.resolve_range(&m, range)?;
        if labels.is_empty() {
            return Err(Error::EmptyInput("no labels to annotate"));
        }
        let pred = LabelPredicate::any_of(labels.iter().cloned())?;
        let entries = index.lookup(&self.name, &pred, Some(range.clone()))?;
        let mut by_sot: BTreeMap<usize, Vec<&crate::index::IndexEntry>> = BTreeMap::new();
        for e in &entries {
            if let Some(i) = m.sot_of_frame(e.bbox.frame) {
                by_sot.entry(i).or_default().push(e);
            }
        }

        let out_root = out_root.as_ref().to_path_buf();
        let out_dir = out_root.join(&self.name);
        if out_dir.exists() {
            return Err(Error::VideoExists(self.name.clone()));
        }
        fs::create_dir_all(&out_dir)?;
        let mut stats = AnnotateStats::default();
        let mut out_sots = Vec::with_capacity(m.sots.len());
        for (sot_idx, sot) in m.sots.iter().enumerate() {
            let rects = tile_rects(&sot.layout);
            let empty = Vec::new();
            let sot_entries = by_sot.get(&sot_idx).unwrap_or(&empty);
            let mut touched: BTreeSet<usize> = BTreeSet::new();
            for e in sot_entries {
                touched.extend(tiles_intersecting(&sot.layout, e.bbox.rect())?);
            }
            let new_dir = SotRecord::dir_name(&sot.frame_range, 1);
            fs::create_dir_all(out_dir.join(&new_dir))?;
            for t in 0..sot.layout.tile_count() {
                let src = sot.chunk_path(&self.video_dir, t);
                let dst = out_dir.join(&new_dir).join(SotRecord::chunk_file(t));
                if touched.contains(&t) {
                    let decoded = decode_chunk_counted(&src, sot.gop_frames())?;
                    let h = decoded.header;
                    let tr = rects[t].rect();
                    let mut rasters = decoded.frames;
                    for e in sot_entries {
                        let rel = (e.bbox.frame - sot.frame_range.start) as usize;
                        paint_border(&mut rasters[rel], tr, e.bbox.rect(), box_value);
                    }
                    let chunk = encode_tile_chunk(h.x, h.y, h.w, h.h, &rasters);
                    fs::write(&dst, chunk)?;
                    stats.reencoded.push((sot_idx, t));
                } else {
                    fs::copy(&src, &dst)?;
                    counters::record_chunk_copy();
                    stats.reused.push((sot_idx, t));
                }
            }
            out_sots.push(SotRecord {
                frame_range: sot.frame_range.clone(),
                layout: sot.layout.clone(),
                dir: new_dir,
                layout_version: 1,
            });
        }
        let out_manifest = Manifest {
            dims: m.dims,
            gop_len: m.gop_len,
            length: m.length,
            sots: out_sots,
        };
        out_manifest.write_atomic(&out_dir)?;
        let out_store = VideoStore::open(&out_root, &self.name)?;
        let frames = out_store.stitch(Some(range))?;
        Ok((frames, stats))
    }
}

/// Paint the 1-px border of `box_rect` into a buffer covering `region`
/// (row stride = region width); pixels outside the region are skipped.
pub fn paint_border(buf: &mut [u8], region: Rect, box_rect: Rect, value: u8) {
    let stride = region.width() as usize;
    let mut put = |x: u32, y: u32| {
        if region.x1 <= x && x < region.x2 && region.y1 <= y && y < region.y2 {
            buf[(y - region.y1) as usize * stride + (x - region.x1) as usize] = value;
        }
    };
    for x in box_rect.x1..box_rect.x2 {
        put(x, box_rect.y1);
        put(x, box_rect.y2 - 1);
    }
    for y in box_rect.y1..box_rect.y2 {
        put(box_rect.x1, y);
        put(box_rect.x2 - 1, y);
    }
}

/// Copy the overlap rect `o` from a tile raster into a region buffer.
fn copy_rect(src: &[u8], src_rect: Rect, o: &Rect, dst: &mut [u8], dst_rect: Rect) {
    let sw = src_rect.width() as usize;
    let dw = dst_rect.width() as usize;
    let ow = o.width() as usize;
    for y in o.y1..o.y2 {
        let si = (y - src_rect.y1) as usize * sw + (o.x1 - src_rect.x1) as usize;
        let di = (y - dst_rect.y1) as usize * dw + (o.x1 - dst_rect.x1) as usize;
        dst[di..di + ow].copy_from_slice(&src[si..si + ow]);
    }
}

/// Blit a full tile raster into a frame buffer at its (x, y) offset.
fn blit(raster: &[u8], tile_w: u32, frame: &mut [u8], frame_w: u32, x: u32, y: u32, tile_h: u32) {
    let tw = tile_w as usize;
    for row in 0..tile_h as usize {
        let di = (y as usize + row) * frame_w as usize + x as usize;
        frame[di..di + tw].copy_from_slice(&raster[row * tw..(row + 1) * tw]);
    }
}

fn decode_chunk_counted(path: &Path, frames: u32) -> Result<DecodedTile> {
    let t0 = Instant::now();
    let bytes = fs::read(path)?;
    let decoded = decode_tile_chunk(&bytes, frames)?;
    let pixels = (decoded.header.w * decoded.header.h) as u64 * decoded.frames.len() as u64;
    counters::record_decode(pixels, t0.elapsed());
    Ok(decoded)
}

/// Encode one SOT's tiles under `dir_name` from full-frame buffers.
fn write_sot_chunks(
    video_dir: &Path,
    dir_name: &str,
    layout: &TileLayout,
    frames: &[&[u8]],
    dims: FrameDims,
) -> Result<()> {
    let dir = video_dir.join(dir_name);
    fs::create_dir_all(&dir)?;
    for tr in tile_rects(layout) {
        let mut rasters = Vec::with_capacity(frames.len());
        for frame in frames {
            let mut raster = vec![0u8; (tr.w * tr.h) as usize];
            for row in 0..tr.h as usize {
                let si = (tr.y as usize + row) * dims.width as usize + tr.x as usize;
                raster[row * tr.w as usize..(row + 1) * tr.w as usize]
                    .copy_from_slice(&frame[si..si + tr.w as usize]);
            }
            rasters.push(raster);
        }
        let chunk = encode_tile_chunk(tr.x, tr.y, tr.w, tr.h, &rasters);
        fs::write(dir.join(SotRecord::chunk_file(tr.tile_id)), chunk)?;
    }
    Ok(())
}

struct RetileGuard<'a> {
    set: &'a Mutex<HashSet<usize>>,
    idx: usize,
}

impl<'a> RetileGuard<'a> {
    fn acquire(set: &'a Mutex<HashSet<usize>>, idx: usize) -> Result<Self> {
        if !set.lock().unwrap().insert(idx) {
            return Err(Error::RetileInProgress(idx));
        }
        Ok(Self { set, idx })
    }
}

impl Drop for RetileGuard<'_> {
    fn drop(&mut self) {
        self.set.lock().unwrap().remove(&self.idx);
    }
}
