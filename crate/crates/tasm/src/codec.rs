//! Deterministic lossless mock codec for tile chunks.
//!
//! Pixels are 8-bit grayscale. A chunk holds one tile across all frames of
//! a GOP: the keyframe block is the zlib-compressed tile raster, and each
//! delta block is the byte-wise wrapping difference against the previous
//! frame's raster, compressed the same way. Decoding frame `f` therefore
//! requires processing blocks `0..=f`, mirroring decode-from-keyframe
//! temporal dependencies.
//!
//! Chunk file format (all integers little-endian):
//!
//! ```text
//! magic "TASMCHK1" | x u16 | y u16 | w u16 | h u16
//! | frame_count u32 | flags u32 (codec version)
//! | frame_count * (block_len u32 | zlib bytes)
//! ```

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

pub const CHUNK_MAGIC: &[u8; 8] = b"TASMCHK1";
pub const CODEC_VERSION: u32 = 1;

/// Tile placement and frame count parsed from a chunk header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkHeader {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub frame_count: u32,
    pub flags: u32,
}

const HEADER_LEN: usize = 8 + 4 * 2 + 4 + 4;

fn compress(data: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::fast());
    enc.write_all(data).expect("in-memory write");
    enc.finish().expect("in-memory finish")
}

fn decompress(data: &[u8], expected: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(expected);
    ZlibDecoder::new(data)
        .read_to_end(&mut out)
        .map_err(|e| Error::Corrupt {
            what: "chunk block",
            detail: e.to_string(),
        })?;
    if out.len() != expected {
        return Err(Error::Corrupt {
            what: "chunk block",
            detail: format!("decoded {} bytes, expected {}", out.len(), expected),
        });
    }
    Ok(out)
}

/// Encode one tile's rasters (one `w*h` slice per frame) into chunk bytes.
pub fn encode_tile_chunk(x: u32, y: u32, w: u32, h: u32, rasters: &[Vec<u8>]) -> Vec<u8> {
    let area = (w * h) as usize;
    debug_assert!(rasters.iter().all(|r| r.len() == area));
    let mut out = Vec::with_capacity(HEADER_LEN + area / 4);
    out.extend_from_slice(CHUNK_MAGIC);
    for v in [x, y, w, h] {
        out.extend_from_slice(&(v as u16).to_le_bytes());
    }
    out.extend_from_slice(&(rasters.len() as u32).to_le_bytes());
    out.extend_from_slice(&CODEC_VERSION.to_le_bytes());
    let mut prev: Option<&Vec<u8>> = None;
    let mut scratch = vec![0u8; area];
    for raster in rasters {
        let block = match prev {
            None => compress(raster),
            Some(p) => {
                for i in 0..area {
                    scratch[i] = raster[i].wrapping_sub(p[i]);
                }
                compress(&scratch)
            }
        };
        out.extend_from_slice(&(block.len() as u32).to_le_bytes());
        out.extend_from_slice(&block);
        prev = Some(raster);
    }
    out
}

pub fn read_chunk_header(bytes: &[u8]) -> Result<ChunkHeader> {
    let corrupt = |detail: &str| Error::Corrupt {
        what: "chunk header",
        detail: detail.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("too short"));
    }
    if &bytes[..8] != CHUNK_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u16at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap()) as u32;
    let header = ChunkHeader {
        x: u16at(8),
        y: u16at(10),
        w: u16at(12),
        h: u16at(14),
        frame_count: u32::from_le_bytes(bytes[16..20].try_into().unwrap()),
        flags: u32::from_le_bytes(bytes[20..24].try_into().unwrap()),
    };
    if header.flags != CODEC_VERSION {
        return Err(corrupt("unsupported codec version"));
    }
    if header.w == 0 || header.h == 0 {
        return Err(corrupt("zero tile dims"));
    }
    Ok(header)
}

/// A decoded prefix of a chunk: tile rasters for frames `0..frames.len()`.
#[derive(Debug, Clone)]
pub struct DecodedTile {
    pub header: ChunkHeader,
    pub frames: Vec<Vec<u8>>,
}

/// Decode the first `upto_frames` frames of a chunk (clamped to the chunk's
/// frame count). Every block up to the last requested frame is processed.
pub fn decode_tile_chunk(bytes: &[u8], upto_frames: u32) -> Result<DecodedTile> {
    let header = read_chunk_header(bytes)?;
    let want = upto_frames.min(header.frame_count) as usize;
    let area = (header.w * header.h) as usize;
    let mut frames: Vec<Vec<u8>> = Vec::with_capacity(want);
    let mut pos = HEADER_LEN;
    for _ in 0..want {
        if pos + 4 > bytes.len() {
            return Err(Error::Corrupt {
                what: "chunk block",
                detail: "truncated block length".to_string(),
            });
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + len > bytes.len() {
            return Err(Error::Corrupt {
                what: "chunk block",
                detail: "truncated block".to_string(),
            });
        }
        let mut raster = decompress(&bytes[pos..pos + len], area)?;
        pos += len;
        if let Some(prev) = frames.last() {
            for i in 0..area {
                raster[i] = raster[i].wrapping_add(prev[i]);
            }
        }
        frames.push(raster);
    }
    Ok(DecodedTile { header, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_static_and_moving_content() {
        let (w, h) = (16u32, 8u32);
        let area = (w * h) as usize;
        let mut rasters = Vec::new();
        for f in 0..5u8 {
            let mut r = vec![10u8; area];
            for i in 0..area {
                if (i + f as usize) % 7 == 0 {
                    r[i] = 200u8.wrapping_add(f);
                }
            }
            rasters.push(r);
        }
        let chunk = encode_tile_chunk(32, 0, w, h, &rasters);
        let dec = decode_tile_chunk(&chunk, 5).unwrap();
        assert_eq!(dec.header.x, 32);
        assert_eq!(dec.frames, rasters);

        let partial = decode_tile_chunk(&chunk, 2).unwrap();
        assert_eq!(partial.frames.len(), 2);
        assert_eq!(partial.frames[1], rasters[1]);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let chunk = encode_tile_chunk(0, 0, 4, 4, &[vec![0u8; 16]]);
        let mut bad = chunk.clone();
        bad[0] = b'X';
        assert!(read_chunk_header(&bad).is_err());
        let mut bad = chunk;
        bad[20] = 99;
        assert!(read_chunk_header(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn prop_lossless_round_trip(
            w in 1u32..24, h in 1u32..24, n in 1usize..6,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let area = (w * h) as usize;
            let rasters: Vec<Vec<u8>> = (0..n)
                .map(|_| (0..area).map(|_| rng.random::<u8>()).collect())
                .collect();
            let chunk = encode_tile_chunk(0, 0, w, h, &rasters);
            let dec = decode_tile_chunk(&chunk, n as u32).unwrap();
            prop_assert_eq!(dec.frames, rasters);
        }
    }
}
