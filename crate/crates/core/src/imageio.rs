//! Binary PGM (`P5`) and single-channel PFM (`Pf`) readers and writers.
//!
//! PGM samples are scaled into `[0, 1]` by `1 / maxval` on load (8-bit or
//! 16-bit big-endian). PFM planes are written little-endian (negative scale)
//! with rows stored bottom-to-top as the format requires.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::Plane;

/// Sample width of a PGM file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Header tokenizer shared by the netpbm-style formats: whitespace separated
/// tokens with `#` comments running to end of line.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()
    }

    /// Consumes the single whitespace byte that separates header and raster.
    fn end_of_header(&mut self) -> Option<usize> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Some(self.pos)
        } else {
            None
        }
    }
}

fn parse_usize(tok: Option<&str>, what: &str, path: &Path) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, format!("missing or invalid {what}")))
}

/// Decodes a binary PGM from memory. `path` is only used in error messages.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(Plane, BitDepth)> {
    let mut hdr = Header::new(bytes);
    if hdr.token() != Some("P5") {
        return Err(Error::parse(path, "not a binary PGM (expected P5 magic)"));
    }
    let width = parse_usize(hdr.token(), "width", path)?;
    let height = parse_usize(hdr.token(), "height", path)?;
    let maxval = parse_usize(hdr.token(), "maxval", path)?;
    if width == 0 || height == 0 {
        return Err(Error::parse(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(path, format!("maxval {maxval} out of range")));
    }
    let start = hdr
        .end_of_header()
        .ok_or_else(|| Error::parse(path, "header not terminated by whitespace"))?;
    let depth = if maxval < 256 {
        BitDepth::Eight
    } else {
        BitDepth::Sixteen
    };
    let bps = if depth == BitDepth::Eight { 1 } else { 2 };
    let need = width * height * bps;
    let raster = &bytes[start..];
    if raster.len() < need {
        return Err(Error::parse(
            path,
            format!(
                "truncated raster: need {need} bytes, found {}",
                raster.len()
            ),
        ));
    }
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(width * height);
    match depth {
        BitDepth::Eight => {
            for &b in &raster[..need] {
                data.push((b as f64 * scale).min(1.0));
            }
        }
        BitDepth::Sixteen => {
            for c in raster[..need].chunks_exact(2) {
                let v = u16::from_be_bytes([c[0], c[1]]);
                data.push((v as f64 * scale).min(1.0));
            }
        }
    }
    Ok((Plane::new(width, height, data)?, depth))
}

/// Encodes a plane of `[0, 1]` values; out of range values are clamped.
pub fn encode_pgm(plane: &Plane, depth: BitDepth) -> Vec<u8> {
    let maxval = depth.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", plane.width(), plane.height(), maxval).into_bytes();
    let quant = |v: f64| (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
    match depth {
        BitDepth::Eight => out.extend(plane.data().iter().map(|&v| quant(v) as u8)),
        BitDepth::Sixteen => {
            for &v in plane.data() {
                out.extend_from_slice(&(quant(v) as u16).to_be_bytes());
            }
        }
    }
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<(Plane, BitDepth)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn write_pgm(path: impl AsRef<Path>, plane: &Plane, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(plane, depth)).map_err(|e| Error::io(path, e))
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Plane> {
    let mut hdr = Header::new(bytes);
    match hdr.token() {
        Some("Pf") => {}
        Some("PF") => return Err(Error::parse(path, "color PFM not supported")),
        _ => return Err(Error::parse(path, "not a PFM (expected Pf magic)")),
    }
    let width = parse_usize(hdr.token(), "width", path)?;
    let height = parse_usize(hdr.token(), "height", path)?;
    let scale: f64 = hdr
        .token()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, "missing or invalid scale"))?;
    if width == 0 || height == 0 {
        return Err(Error::parse(path, "zero image dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(path, "scale must be finite and nonzero"));
    }
    let start = hdr
        .end_of_header()
        .ok_or_else(|| Error::parse(path, "header not terminated by whitespace"))?;
    let need = width * height * 4;
    let raster = &bytes[start..];
    if raster.len() < need {
        return Err(Error::parse(
            path,
            format!(
                "truncated raster: need {need} bytes, found {}",
                raster.len()
            ),
        ));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0; width * height];
    for (i, c) in raster[..need].chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        // stored bottom row first
        let (row, col) = (i / width, i % width);
        data[(height - 1 - row) * width + col] = v as f64;
    }
    Plane::new(width, height, data)
}

pub fn encode_pfm(plane: &Plane) -> Vec<u8> {
    let (w, h) = plane.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(plane.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Plane> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn write_pfm(path: impl AsRef<Path>, plane: &Plane) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(plane)).map_err(|e| Error::io(path, e))
}
