//! Raw grayscale frame sequences and the `.y8` file format.
//!
//! A `.y8` file is the ASCII header `Y8 <width> <height> <nframes>\n`
//! followed by `nframes * width * height` bytes, one byte per pixel,
//! frames concatenated row-major.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::FrameDims;

/// An in-memory grayscale frame sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSeq {
    pub dims: FrameDims,
    pub data: Vec<u8>,
}

impl FrameSeq {
    pub fn new(dims: FrameDims, frames: u32) -> Self {
        Self {
            dims,
            data: vec![0; dims.area() as usize * frames as usize],
        }
    }

    pub fn from_data(dims: FrameDims, data: Vec<u8>) -> Result<Self> {
        if dims.area() == 0 || data.len() % dims.area() as usize != 0 {
            return Err(Error::Corrupt {
                what: "frame data",
                detail: format!("{} bytes is not a whole number of frames", data.len()),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn frame_count(&self) -> u32 {
        (self.data.len() as u64 / self.dims.area()) as u32
    }

    pub fn frame(&self, i: u32) -> &[u8] {
        let a = self.dims.area() as usize;
        &self.data[i as usize * a..(i as usize + 1) * a]
    }

    pub fn frame_mut(&mut self, i: u32) -> &mut [u8] {
        let a = self.dims.area() as usize;
        &mut self.data[i as usize * a..(i as usize + 1) * a]
    }
}

pub fn write_y8(path: impl AsRef<Path>, seq: &FrameSeq) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "Y8 {} {} {}\n",
        seq.dims.width,
        seq.dims.height,
        seq.frame_count()
    )?;
    w.write_all(&seq.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_y8(path: impl AsRef<Path>) -> Result<FrameSeq> {
    let corrupt = |detail: &str| Error::Corrupt {
        what: "y8 file",
        detail: detail.to_string(),
    };
    let mut f = File::open(path)?;
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if f.read(&mut byte)? != 1 {
            return Err(corrupt("missing header newline"));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 64 {
            return Err(corrupt("header too long"));
        }
    }
    let header = String::from_utf8(header).map_err(|_| corrupt("header not utf-8"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "Y8" {
        return Err(corrupt("expected `Y8 <width> <height> <nframes>`"));
    }
    let width: u32 = parts[1].parse().map_err(|_| corrupt("bad width"))?;
    let height: u32 = parts[2].parse().map_err(|_| corrupt("bad height"))?;
    let nframes: u32 = parts[3].parse().map_err(|_| corrupt("bad frame count"))?;
    let expected = width as usize * height as usize * nframes as usize;
    let mut data = Vec::with_capacity(expected);
    f.read_to_end(&mut data)?;
    if data.len() != expected {
        return Err(corrupt("payload length mismatch"));
    }
    FrameSeq::from_data(FrameDims::new(width, height), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip() {
        let dims = FrameDims::new(8, 4);
        let mut seq = FrameSeq::new(dims, 3);
        for (i, b) in seq.data.iter_mut().enumerate() {
            *b = (i % 251) as u8;
        }
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.y8");
        write_y8(&path, &seq).unwrap();
        assert_eq!(read_y8(&path).unwrap(), seq);
    }

    #[test]
    fn rejects_short_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.y8");
        std::fs::write(&path, b"Y8 4 4 2\n0123").unwrap();
        assert!(read_y8(&path).is_err());
    }
}
