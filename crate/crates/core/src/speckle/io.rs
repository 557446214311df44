//! Frame stack files and image export.
//!
//! Stack layout (all little-endian): magic `GIFR`, version `u16`, width
//! `u32`, height `u32`, frame count `u32`, then every frame row-major as
//! `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ghost::GhostImage;
use super::SpeckleFrame;
use crate::error::{GhostError, Result};

pub const MAGIC: [u8; 4] = *b"GIFR";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackHeader {
    pub width: u32,
    pub height: u32,
    pub frames: u32,
}

impl StackHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&VERSION.to_le_bytes());
        out[6..10].copy_from_slice(&self.width.to_le_bytes());
        out[10..14].copy_from_slice(&self.height.to_le_bytes());
        out[14..18].copy_from_slice(&self.frames.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8; HEADER_LEN]) -> Result<Self> {
        if bytes[..4] != MAGIC {
            return Err(GhostError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(GhostError::Format(format!("unsupported version {version}")));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        Ok(Self {
            width: word(6),
            height: word(10),
            frames: word(14),
        })
    }
}

fn dim(value: usize, name: &'static str) -> Result<u32> {
    u32::try_from(value).map_err(|_| GhostError::invalid(name, "does not fit in u32"))
}

/// Streams frames into a stack file whose frame count is fixed up front.
pub struct FrameWriter<W: Write> {
    out: W,
    header: StackHeader,
    written: u32,
}

impl FrameWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, width: usize, height: usize, frames: usize) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), width, height, frames)
    }
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut out: W, width: usize, height: usize, frames: usize) -> Result<Self> {
        let header = StackHeader {
            width: dim(width, "width")?,
            height: dim(height, "height")?,
            frames: dim(frames, "frames")?,
        };
        out.write_all(&header.encode())?;
        Ok(Self {
            out,
            header,
            written: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.header.width as usize * self.header.height as usize {
            return Err(GhostError::Format("frame size does not match header".into()));
        }
        if self.written == self.header.frames {
            return Err(GhostError::Format("more frames than declared".into()));
        }
        let mut buf = Vec::with_capacity(frame.len() * 8);
        for v in frame {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.frames {
            return Err(GhostError::Format(format!(
                "declared {} frames, wrote {}",
                self.header.frames, self.written
            )));
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

pub struct FrameReader {
    input: Box<dyn Read + Send>,
    header: StackHeader,
    read: u32,
}

impl FrameReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Box::new(BufReader::new(File::open(path)?)))
    }

    pub fn new(mut input: Box<dyn Read + Send>) -> Result<Self> {
        let mut bytes = [0u8; HEADER_LEN];
        input
            .read_exact(&mut bytes)
            .map_err(|_| GhostError::Format("truncated header".into()))?;
        Ok(Self {
            input,
            header: StackHeader::decode(&bytes)?,
            read: 0,
        })
    }

    pub fn header(&self) -> StackHeader {
        self.header
    }

    /// Raw values of the next frame; `None` after the last one.
    pub fn next_raw(&mut self) -> Result<Option<Vec<f64>>> {
        if self.read == self.header.frames {
            return Ok(None);
        }
        let len = self.header.width as usize * self.header.height as usize;
        let mut bytes = vec![0u8; len * 8];
        self.input
            .read_exact(&mut bytes)
            .map_err(|_| GhostError::Format(format!("truncated data in frame {}", self.read)))?;
        self.read += 1;
        Ok(Some(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        ))
    }

    pub fn next_frame(&mut self) -> Result<Option<SpeckleFrame>> {
        let (w, h) = (self.header.width as usize, self.header.height as usize);
        self.next_raw()?.map(|px| SpeckleFrame::new(w, h, px)).transpose()
    }
}

pub fn write_frame_stack(path: impl AsRef<Path>, frames: &[SpeckleFrame]) -> Result<()> {
    let (w, h) = frames
        .first()
        .map(|f| (f.width(), f.height()))
        .ok_or(GhostError::InsufficientFrames { needed: 1, got: 0 })?;
    let mut writer = FrameWriter::create(path, w, h, frames.len())?;
    for f in frames {
        writer.write_frame(f.pixels())?;
    }
    writer.finish()?;
    Ok(())
}

pub fn read_frame_stack(path: impl AsRef<Path>) -> Result<Vec<SpeckleFrame>> {
    let mut reader = FrameReader::open(path)?;
    let mut frames = Vec::with_capacity(reader.header().frames as usize);
    while let Some(f) = reader.next_frame()? {
        frames.push(f);
    }
    Ok(frames)
}

/// Writes a ghost image as a one-frame stack (values may be negative only
/// if produced with detector noise, so they are stored raw).
pub fn write_ghost_image(path: impl AsRef<Path>, image: &GhostImage) -> Result<()> {
    let mut writer = FrameWriter::create(path, image.width, image.height, 1)?;
    writer.write_frame(&image.values)?;
    writer.finish()?;
    Ok(())
}

/// Reads a one-frame stack back as a ghost image of the given order.
pub fn read_ghost_image(path: impl AsRef<Path>, order: u32, frames_used: usize) -> Result<GhostImage> {
    let mut reader = FrameReader::open(path)?;
    let header = reader.header();
    let values = reader
        .next_raw()?
        .ok_or_else(|| GhostError::Format("empty image file".into()))?;
    Ok(GhostImage {
        order,
        width: header.width as usize,
        height: header.height as usize,
        values,
        frames_used,
        frame_series: None,
    })
}

/// Plain-text 16-bit PGM, min-max scaled to `0..=65535`.
pub fn write_pgm(out: &mut impl Write, values: &[f64], width: usize, height: usize) -> Result<()> {
    if values.len() != width * height {
        return Err(GhostError::invalid("values", "length does not match dimensions"));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = hi - lo;
    writeln!(out, "P2\n{width} {height}\n65535")?;
    for row in values.chunks(width) {
        let line: Vec<String> = row
            .iter()
            .map(|v| {
                let level = if span > 0.0 { ((v - lo) / span * 65535.0).round() } else { 0.0 };
                (level as u32).to_string()
            })
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_pgm_file(path: impl AsRef<Path>, image: &GhostImage) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_pgm(&mut out, &image.values, image.width, image.height)?;
    out.flush()?;
    Ok(())
}
