//! Persistent semantic index of labeled bounding boxes.
//!
//! Entries are clustered by (video, label, frame) in an ordered in-memory
//! map that is rebuilt from an append-only log on open. The log holds
//! little-endian, length-prefixed records behind an 8-byte `TASMIDX1`
//! magic header:
//!
//! ```text
//! u32 record_len | u32 video_id | u32 frame | u16 label_len | label utf-8
//!                | u16 x1 | u16 y1 | u16 x2 | u16 y2
//! ```
//!
//! Video registrations (name, numeric id, dims, frame count) live in a
//! sidecar `videos.txt` with one sorted line per video.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, FrameDims};
use crate::query::LabelPredicate;

pub const INDEX_MAGIC: &[u8; 8] = b"TASMIDX1";
const ENTRIES_FILE: &str = "entries.tasmidx";
const CATALOG_FILE: &str = "videos.txt";

/// One indexed detection: a labeled box on a frame of a video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub video: String,
    pub bbox: BoundingBox,
}

type BoxCoords = (u16, u16, u16, u16);

#[derive(Debug, Clone)]
struct VideoMeta {
    id: u32,
    dims: FrameDims,
    frames: u32,
}

#[derive(Default)]
struct Inner {
    videos: BTreeMap<String, VideoMeta>,
    next_id: u32,
    // video id -> (label, frame) -> boxes
    entries: HashMap<u32, BTreeMap<(String, u32), BTreeSet<BoxCoords>>>,
}

/// Store of labeled bounding boxes with (video, label, time) clustering.
pub struct SemanticIndex {
    dir: PathBuf,
    inner: RwLock<Inner>,
    log: std::sync::Mutex<BufWriter<File>>,
}

impl SemanticIndex {
    /// Open (or create) an index rooted at `dir`, replaying any existing log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut inner = Inner::default();
        read_catalog(&dir.join(CATALOG_FILE), &mut inner)?;
        let entries_path = dir.join(ENTRIES_FILE);
        if entries_path.exists() {
            replay_log(&entries_path, &mut inner)?;
        } else {
            let mut f = File::create(&entries_path)?;
            f.write_all(INDEX_MAGIC)?;
        }
        let log = OpenOptions::new().append(true).open(&entries_path)?;
        Ok(Self {
            dir,
            inner: RwLock::new(inner),
            log: std::sync::Mutex::new(BufWriter::new(log)),
        })
    }

    /// Register a video's dims and length. Idempotent when unchanged.
    pub fn register_video(&self, video: &str, dims: FrameDims, frames: u32) -> Result<()> {
        if video.is_empty()
            || !video
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(Error::InvalidVideoName(video.to_string()));
        }
        let mut inner = self.inner.write().unwrap();
        if let Some(meta) = inner.videos.get(video) {
            if meta.dims == dims && meta.frames == frames {
                return Ok(());
            }
            return Err(Error::VideoExists(video.to_string()));
        }
        let id = inner.next_id;
        inner.next_id += 1;
        inner.videos.insert(
            video.to_string(),
            VideoMeta { id, dims, frames },
        );
        write_catalog(&self.dir.join(CATALOG_FILE), &inner)?;
        Ok(())
    }

    pub fn video_dims(&self, video: &str) -> Result<(FrameDims, u32)> {
        let inner = self.inner.read().unwrap();
        let meta = inner
            .videos
            .get(video)
            .ok_or_else(|| Error::UnknownVideo(video.to_string()))?;
        Ok((meta.dims, meta.frames))
    }

    /// Insert one labeled box. Boxes extending past the frame edge are
    /// clipped; exact duplicates collapse to a single logical entry.
    pub fn add_metadata(
        &self,
        video: &str,
        frame: u32,
        label: &str,
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
    ) -> Result<()> {
        let mut inner = self.inner.write().unwrap();
        let meta = inner
            .videos
            .get(video)
            .ok_or_else(|| Error::UnknownVideo(video.to_string()))?
            .clone();
        if frame >= meta.frames {
            return Err(Error::FrameOutOfRange {
                frame,
                len: meta.frames,
            });
        }
        let bbox = BoundingBox::new(frame, label, x1, y1, x2.min(meta.dims.width), y2.min(meta.dims.height));
        bbox.validate(meta.dims)?;
        let coords = (
            bbox.x1 as u16,
            bbox.y1 as u16,
            bbox.x2 as u16,
            bbox.y2 as u16,
        );
        let fresh = inner
            .entries
            .entry(meta.id)
            .or_default()
            .entry((label.to_string(), frame))
            .or_default()
            .insert(coords);
        if fresh {
            let mut log = self.log.lock().unwrap();
            write_record(&mut *log, meta.id, frame, label, coords)?;
            log.flush()?;
        }
        Ok(())
    }

    /// Convenience wrapper taking a full box.
    pub fn add_box(&self, video: &str, bbox: &BoundingBox) -> Result<()> {
        self.add_metadata(
            video, bbox.frame, &bbox.label, bbox.x1, bbox.y1, bbox.x2, bbox.y2,
        )
    }

    /// Entries matching a CNF predicate over a frame range, ordered by
    /// (label, frame, coords).
    ///
    /// A frame satisfies the predicate when every clause has at least one
    /// entry with a clause label on that frame; the returned entries are
    /// those on satisfying frames whose label appears in the predicate.
    pub fn lookup(
        &self,
        video: &str,
        pred: &LabelPredicate,
        range: Option<Range<u32>>,
    ) -> Result<Vec<IndexEntry>> {
        let inner = self.inner.read().unwrap();
        let meta = inner
            .videos
            .get(video)
            .ok_or_else(|| Error::UnknownVideo(video.to_string()))?;
        let range = match range {
            Some(r) => {
                if r.end > meta.frames || r.start > r.end {
                    return Err(Error::RangeOutOfBounds {
                        start: r.start,
                        end: r.end,
                        len: meta.frames,
                    });
                }
                r
            }
            None => 0..meta.frames,
        };
        let Some(emap) = inner.entries.get(&meta.id) else {
            return Ok(Vec::new());
        };
        let frames_for = |label: &str| -> BTreeSet<u32> {
            emap.range((label.to_string(), range.start)..(label.to_string(), range.end))
                .map(|((_, f), _)| *f)
                .collect()
        };
        let mut satisfying: Option<BTreeSet<u32>> = None;
        for clause in pred.clauses() {
            let mut cf = BTreeSet::new();
            for label in clause {
                cf.extend(frames_for(label));
            }
            satisfying = Some(match satisfying {
                None => cf,
                Some(prev) => prev.intersection(&cf).copied().collect(),
            });
            if satisfying.as_ref().unwrap().is_empty() {
                return Ok(Vec::new());
            }
        }
        let satisfying = satisfying.unwrap_or_default();
        let mut out = Vec::new();
        for label in pred.labels() {
            for ((_, frame), boxes) in
                emap.range((label.to_string(), range.start)..(label.to_string(), range.end))
            {
                if !satisfying.contains(frame) {
                    continue;
                }
                for &(x1, y1, x2, y2) in boxes {
                    out.push(IndexEntry {
                        video: video.to_string(),
                        bbox: BoundingBox::new(
                            *frame, label, x1 as u32, y1 as u32, x2 as u32, y2 as u32,
                        ),
                    });
                }
            }
        }
        Ok(out)
    }

    /// Labels that have at least one entry for the video.
    pub fn distinct_labels(&self, video: &str) -> Result<BTreeSet<String>> {
        let inner = self.inner.read().unwrap();
        let meta = inner
            .videos
            .get(video)
            .ok_or_else(|| Error::UnknownVideo(video.to_string()))?;
        Ok(inner
            .entries
            .get(&meta.id)
            .map(|emap| emap.keys().map(|(l, _)| l.clone()).collect())
            .unwrap_or_default())
    }

    /// Total number of logical entries across all videos.
    pub fn len(&self) -> usize {
        let inner = self.inner.read().unwrap();
        inner
            .entries
            .values()
            .flat_map(|m| m.values())
            .map(|s| s.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn write_record<W: Write>(
    w: &mut W,
    video_id: u32,
    frame: u32,
    label: &str,
    coords: BoxCoords,
) -> Result<()> {
    let label_bytes = label.as_bytes();
    let record_len = 4 + 4 + 2 + label_bytes.len() + 8;
    w.write_all(&(record_len as u32).to_le_bytes())?;
    w.write_all(&video_id.to_le_bytes())?;
    w.write_all(&frame.to_le_bytes())?;
    w.write_all(&(label_bytes.len() as u16).to_le_bytes())?;
    w.write_all(label_bytes)?;
    for c in [coords.0, coords.1, coords.2, coords.3] {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn replay_log(path: &Path, inner: &mut Inner) -> Result<()> {
    let corrupt = |detail: &str| Error::Corrupt {
        what: "index log",
        detail: detail.to_string(),
    };
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 8 || &data[..8] != INDEX_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut pos = 8;
    while pos < data.len() {
        if pos + 4 > data.len() {
            return Err(corrupt("truncated record length"));
        }
        let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + len > data.len() || len < 18 {
            return Err(corrupt("truncated record"));
        }
        let rec = &data[pos..pos + len];
        pos += len;
        let video_id = u32::from_le_bytes(rec[0..4].try_into().unwrap());
        let frame = u32::from_le_bytes(rec[4..8].try_into().unwrap());
        let label_len = u16::from_le_bytes(rec[8..10].try_into().unwrap()) as usize;
        if 10 + label_len + 8 != len {
            return Err(corrupt("record length mismatch"));
        }
        let label = std::str::from_utf8(&rec[10..10 + label_len])
            .map_err(|_| corrupt("label not utf-8"))?
            .to_string();
        let c = &rec[10 + label_len..];
        let coords = (
            u16::from_le_bytes(c[0..2].try_into().unwrap()),
            u16::from_le_bytes(c[2..4].try_into().unwrap()),
            u16::from_le_bytes(c[4..6].try_into().unwrap()),
            u16::from_le_bytes(c[6..8].try_into().unwrap()),
        );
        inner
            .entries
            .entry(video_id)
            .or_default()
            .entry((label, frame))
            .or_default()
            .insert(coords);
    }
    Ok(())
}

fn write_catalog(path: &Path, inner: &Inner) -> Result<()> {
    let mut text = String::new();
    for (name, meta) in &inner.videos {
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            name, meta.id, meta.dims.width, meta.dims.height, meta.frames
        ));
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_catalog(path: &Path, inner: &mut Inner) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let corrupt = |detail: &str| Error::Corrupt {
        what: "video catalog",
        detail: detail.to_string(),
    };
    for line in fs::read_to_string(path)?.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(corrupt("expected 5 fields"));
        }
        let name = parts[0].to_string();
        let id: u32 = parts[1].parse().map_err(|_| corrupt("bad id"))?;
        let width: u32 = parts[2].parse().map_err(|_| corrupt("bad width"))?;
        let height: u32 = parts[3].parse().map_err(|_| corrupt("bad height"))?;
        let frames: u32 = parts[4].parse().map_err(|_| corrupt("bad frames"))?;
        inner.videos.insert(
            name,
            VideoMeta {
                id,
                dims: FrameDims::new(width, height),
                frames,
            },
        );
        inner.next_id = inner.next_id.max(id + 1);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn fresh() -> (tempfile::TempDir, SemanticIndex) {
        let dir = tempdir().unwrap();
        let idx = SemanticIndex::open(dir.path().join("index")).unwrap();
        idx.register_video("v", FrameDims::new(640, 320), 120).unwrap();
        (dir, idx)
    }

    #[test]
    fn write_then_read_back() {
        let (_d, idx) = fresh();
        idx.add_metadata("v", 3, "car", 10, 10, 50, 50).unwrap();
        let got = idx
            .lookup("v", &LabelPredicate::single("car"), None)
            .unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].bbox, BoundingBox::new(3, "car", 10, 10, 50, 50));
    }

    #[test]
    fn duplicate_insert_is_single_entry() {
        let (_d, idx) = fresh();
        idx.add_metadata("v", 3, "car", 10, 10, 50, 50).unwrap();
        idx.add_metadata("v", 3, "car", 10, 10, 50, 50).unwrap();
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn rejects_degenerate_box() {
        let (_d, idx) = fresh();
        assert!(idx.add_metadata("v", 0, "car", 50, 10, 50, 50).is_err());
        assert!(idx.add_metadata("v", 0, "car", 60, 10, 50, 50).is_err());
    }

    #[test]
    fn clips_box_at_frame_edge() {
        let (_d, idx) = fresh();
        idx.add_metadata("v", 0, "car", 600, 300, 700, 400).unwrap();
        let got = idx
            .lookup("v", &LabelPredicate::single("car"), None)
            .unwrap();
        assert_eq!(got[0].bbox.x2, 640);
        assert_eq!(got[0].bbox.y2, 320);
    }

    #[test]
    fn errors_on_unknown_video_and_bad_frame() {
        let (_d, idx) = fresh();
        assert!(idx.add_metadata("nope", 0, "car", 0, 0, 5, 5).is_err());
        assert!(idx.add_metadata("v", 120, "car", 0, 0, 5, 5).is_err());
        assert!(idx.lookup("nope", &LabelPredicate::single("car"), None).is_err());
    }

    #[test]
    fn empty_index_lookup_is_empty() {
        let (_d, idx) = fresh();
        assert!(idx
            .lookup("v", &LabelPredicate::single("car"), None)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn conjunction_requires_cooccurrence() {
        let (_d, idx) = fresh();
        idx.add_metadata("v", 1, "car", 0, 0, 10, 10).unwrap();
        idx.add_metadata("v", 2, "car", 0, 0, 10, 10).unwrap();
        idx.add_metadata("v", 2, "person", 20, 20, 40, 40).unwrap();
        let pred = LabelPredicate::parse("car & person").unwrap();
        let got = idx.lookup("v", &pred, None).unwrap();
        // Only frame 2 satisfies both clauses; both entries there returned.
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|e| e.bbox.frame == 2));

        idx.add_metadata("v", 5, "bike", 0, 0, 10, 10).unwrap();
        let pred = LabelPredicate::parse("car & bike").unwrap();
        assert!(idx.lookup("v", &pred, None).unwrap().is_empty());
    }

    #[test]
    fn distinct_labels_reports_detected_only() {
        let (_d, idx) = fresh();
        assert!(idx.distinct_labels("v").unwrap().is_empty());
        idx.add_metadata("v", 0, "car", 0, 0, 10, 10).unwrap();
        idx.add_metadata("v", 0, "person", 20, 0, 30, 10).unwrap();
        assert_eq!(
            idx.distinct_labels("v").unwrap(),
            BTreeSet::from(["car".to_string(), "person".to_string()])
        );
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("index");
        {
            let idx = SemanticIndex::open(&path).unwrap();
            idx.register_video("v", FrameDims::new(640, 320), 120).unwrap();
            idx.add_metadata("v", 3, "car", 10, 10, 50, 50).unwrap();
            idx.add_metadata("v", 7, "person", 100, 100, 200, 200).unwrap();
        }
        let idx = SemanticIndex::open(&path).unwrap();
        let pred = LabelPredicate::parse("car|person").unwrap();
        let got = idx.lookup("v", &pred, None).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].bbox, BoundingBox::new(3, "car", 10, 10, 50, 50));
        assert_eq!(
            got[1].bbox,
            BoundingBox::new(7, "person", 100, 100, 200, 200)
        );
    }

    // Brute-force oracle: filter every entry by per-frame CNF satisfaction.
    fn brute_force_lookup(
        all: &[(String, u32, BoxCoords)],
        pred: &LabelPredicate,
        range: &Range<u32>,
    ) -> Vec<(String, u32, BoxCoords)> {
        let in_range: Vec<_> = all
            .iter()
            .filter(|(_, f, _)| range.contains(f))
            .collect();
        let frame_ok = |f: u32| -> bool {
            pred.clauses().iter().all(|clause| {
                clause.iter().any(|lab| {
                    in_range
                        .iter()
                        .any(|(l, fr, _)| l == lab && *fr == f)
                })
            })
        };
        let labels = pred.labels();
        let mut out: Vec<(String, u32, BoxCoords)> = in_range
            .iter()
            .filter(|(l, f, _)| labels.contains(l.as_str()) && frame_ok(*f))
            .map(|e| (*e).clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn prop_lookup_matches_brute_force(
            entries in prop::collection::vec(
                (0u32..20, 0usize..3, 0u16..60, 0u16..28, 1u16..4, 1u16..4),
                0..40
            ),
            clause_a in 0usize..3,
            clause_b in prop::option::of(0usize..3),
            lo in 0u32..20,
            span in 0u32..20,
        ) {
            let labels = ["car", "person", "bike"];
            let dir = tempdir().unwrap();
            let idx = SemanticIndex::open(dir.path()).unwrap();
            idx.register_video("v", FrameDims::new(64, 32), 20).unwrap();
            let mut all = Vec::new();
            for (f, li, x, y, w, h) in entries {
                let l = labels[li];
                let (x2, y2) = ((x + w).min(64), (y + h).min(32));
                if x2 > x && y2 > y {
                    idx.add_metadata("v", f, l, x as u32, y as u32, x2 as u32, y2 as u32).unwrap();
                    all.push((l.to_string(), f, (x, y, x2, y2)));
                }
            }
            all.sort();
            all.dedup();
            let mut clauses = vec![vec![labels[clause_a].to_string()]];
            if let Some(b) = clause_b {
                clauses.push(vec![labels[b].to_string()]);
            }
            let pred = LabelPredicate::new(clauses).unwrap();
            let range = lo.min(20)..(lo + span).min(20);
            let got = idx.lookup("v", &pred, Some(range.clone())).unwrap();
            let got_tuples: Vec<(String, u32, BoxCoords)> = got
                .iter()
                .map(|e| (
                    e.bbox.label.clone(),
                    e.bbox.frame,
                    (e.bbox.x1 as u16, e.bbox.y1 as u16, e.bbox.x2 as u16, e.bbox.y2 as u16),
                ))
                .collect();
            let mut sorted = got_tuples.clone();
            sorted.sort();
            prop_assert_eq!(&sorted, &brute_force_lookup(&all, &pred, &range));
            // Clustering contract: (label, frame) ascending as returned.
            prop_assert_eq!(&got_tuples, &sorted);
        }
    }
}
