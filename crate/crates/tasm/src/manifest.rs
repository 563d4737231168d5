//! Per-video text manifest.
//!
//! The manifest is a canonical key-sorted `key = value` file describing a
//! video's dims, GOP length, and per-SOT layout, chunk files, and layout
//! version. It is swapped atomically (write temp, rename), so readers
//! always observe one complete version.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{FrameDims, TileLayout};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// A sequence of frames sharing one tile layout, backed by one chunk file
/// per tile inside `dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SotRecord {
    pub frame_range: Range<u32>,
    pub layout: TileLayout,
    /// Directory (relative to the video dir) holding `tile<k>.chk` files.
    pub dir: String,
    pub layout_version: u32,
}

impl SotRecord {
    pub fn gop_frames(&self) -> u32 {
        self.frame_range.end - self.frame_range.start
    }

    pub fn chunk_file(tile_id: usize) -> String {
        format!("tile{tile_id}.chk")
    }

    pub fn chunk_path(&self, video_dir: &Path, tile_id: usize) -> PathBuf {
        video_dir.join(&self.dir).join(Self::chunk_file(tile_id))
    }

    /// The directory name for the initial version of this frame range:
    /// `frames_<first>-<last>` with an inclusive last frame. Retiles
    /// append a `.v<version>` suffix so old chunks stay readable until
    /// the manifest swap.
    pub fn dir_name(frame_range: &Range<u32>, version: u32) -> String {
        let base = format!("frames_{}-{}", frame_range.start, frame_range.end - 1);
        if version <= 1 {
            base
        } else {
            format!("{base}.v{version}")
        }
    }
}

/// On-disk description of one video store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub dims: FrameDims,
    pub gop_len: u32,
    pub length: u32,
    pub sots: Vec<SotRecord>,
}

fn bands_to_string(bands: &[u32]) -> String {
    bands
        .iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn bands_from_string(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<u32>().map_err(|_| Error::Corrupt {
                what: "manifest",
                detail: format!("bad band list `{s}`"),
            })
        })
        .collect()
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        kv.insert("dims.height".into(), self.dims.height.to_string());
        kv.insert("dims.width".into(), self.dims.width.to_string());
        kv.insert("gop_len".into(), self.gop_len.to_string());
        kv.insert("length".into(), self.length.to_string());
        kv.insert("sot_count".into(), self.sots.len().to_string());
        for (i, sot) in self.sots.iter().enumerate() {
            let chunks: Vec<String> = (0..sot.layout.tile_count())
                .map(SotRecord::chunk_file)
                .collect();
            let k = |field: &str| format!("sot.{i:05}.{field}");
            kv.insert(k("chunks"), chunks.join(","));
            kv.insert(k("cols"), bands_to_string(sot.layout.col_widths()));
            kv.insert(k("dir"), sot.dir.clone());
            kv.insert(k("end"), sot.frame_range.end.to_string());
            kv.insert(k("rows"), bands_to_string(sot.layout.row_heights()));
            kv.insert(k("start"), sot.frame_range.start.to_string());
            kv.insert(k("version"), sot.layout_version.to_string());
        }
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let corrupt = |detail: String| Error::Corrupt {
            what: "manifest",
            detail,
        };
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| corrupt(format!("bad line `{line}`")))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |key: &str| -> Result<&str> {
            kv.get(key)
                .copied()
                .ok_or_else(|| corrupt(format!("missing key `{key}`")))
        };
        let num = |key: &str| -> Result<u32> {
            get(key)?
                .parse()
                .map_err(|_| corrupt(format!("bad number for `{key}`")))
        };
        let dims = FrameDims::new(num("dims.width")?, num("dims.height")?);
        let gop_len = num("gop_len")?;
        let length = num("length")?;
        let sot_count = num("sot_count")? as usize;
        let mut sots = Vec::with_capacity(sot_count);
        for i in 0..sot_count {
            let k = |field: &str| format!("sot.{i:05}.{field}");
            let start = num(&k("start"))?;
            let end = num(&k("end"))?;
            let rows = bands_from_string(get(&k("rows"))?)?;
            let cols = bands_from_string(get(&k("cols"))?)?;
            let layout = TileLayout::new(rows, cols);
            let chunks = get(&k("chunks"))?;
            if chunks.split(',').count() != layout.tile_count() {
                return Err(corrupt(format!("sot {i} chunk list/tile count mismatch")));
            }
            sots.push(SotRecord {
                frame_range: start..end,
                layout,
                dir: get(&k("dir"))?.to_string(),
                layout_version: num(&k("version"))?,
            });
        }
        Ok(Self {
            dims,
            gop_len,
            length,
            sots,
        })
    }

    /// Write atomically: temp file then rename over the live manifest.
    pub fn write_atomic(&self, video_dir: &Path) -> Result<()> {
        let tmp = video_dir.join("manifest.tmp");
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, video_dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn load(video_dir: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(video_dir.join(MANIFEST_FILE))?)
    }

    /// The SOT index containing a frame.
    pub fn sot_of_frame(&self, frame: u32) -> Option<usize> {
        self.sots
            .iter()
            .position(|s| s.frame_range.contains(&frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest {
            dims: FrameDims::new(640, 320),
            gop_len: 30,
            length: 60,
            sots: vec![
                SotRecord {
                    frame_range: 0..30,
                    layout: TileLayout::omega(FrameDims::new(640, 320)),
                    dir: "frames_0-29".into(),
                    layout_version: 1,
                },
                SotRecord {
                    frame_range: 30..60,
                    layout: TileLayout::new(vec![64, 256], vec![320, 320]),
                    dir: "frames_30-59.v2".into(),
                    layout_version: 2,
                },
            ],
        }
    }

    #[test]
    fn text_round_trip_is_canonical() {
        let m = sample();
        let text = m.to_text();
        assert_eq!(Manifest::parse(&text).unwrap(), m);
        // Canonical: keys appear sorted.
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn dir_name_versions() {
        assert_eq!(SotRecord::dir_name(&(0..30), 1), "frames_0-29");
        assert_eq!(SotRecord::dir_name(&(30..60), 3), "frames_30-59.v3");
    }

    #[test]
    fn sot_of_frame_lookup() {
        let m = sample();
        assert_eq!(m.sot_of_frame(0), Some(0));
        assert_eq!(m.sot_of_frame(29), Some(0));
        assert_eq!(m.sot_of_frame(30), Some(1));
        assert_eq!(m.sot_of_frame(60), None);
    }
}
