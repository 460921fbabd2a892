//! Binary PGM (P5) export and import of observations.
//!
//! Images are written top row first with world +y pointing up, so the
//! grid's last row comes first in the file. Class masks are 8-bit (0 or
//! 255); depth is 16-bit big-endian in units of 0.1 mm, clamped to
//! `0..=65535`.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Observation, PixelClass};

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM (missing P5 magic)")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(&'static str),
    #[error("pixel data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("pixel value {value} exceeds maxval {maxval}")]
    ValueOutOfRange { value: u16, maxval: u16 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples, top row first.
    pub data: Vec<u16>,
}

/// Largest image accepted by the decoder, in pixels.
const MAX_PIXELS: usize = 1 << 24;

impl PgmImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.data.iter().map(|&v| v as u8));
        } else {
            out.extend(self.data.iter().flat_map(|v| v.to_be_bytes()));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PgmError> {
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(PgmError::BadMagic);
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for field in fields.iter_mut() {
            // Whitespace and comments separate header fields.
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(PgmError::BadHeader("unexpected end of header")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos {
                return Err(PgmError::BadHeader("expected a decimal number"));
            }
            if pos - start > 9 {
                return Err(PgmError::BadHeader("number too large"));
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .expect("ascii digits")
                .parse()
                .expect("at most nine digits");
        }
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(PgmError::BadHeader("missing whitespace after maxval")),
        }
        let [width, height, maxval] = fields;
        if width == 0 || height == 0 {
            return Err(PgmError::BadHeader("zero dimension"));
        }
        if width.saturating_mul(height) > MAX_PIXELS {
            return Err(PgmError::BadHeader("image too large"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(PgmError::BadHeader("maxval must lie in 1..=65535"));
        }
        let n = width * height;
        let bpp = if maxval < 256 { 1 } else { 2 };
        let body = &bytes[pos..];
        if body.len() < n * bpp {
            return Err(PgmError::Truncated {
                expected: n * bpp,
                found: body.len(),
            });
        }
        let maxval = maxval as u16;
        let data: Vec<u16> = if bpp == 1 {
            body[..n].iter().map(|&b| b as u16).collect()
        } else {
            body[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        if let Some(&value) = data.iter().find(|&&v| v > maxval) {
            return Err(PgmError::ValueOutOfRange { value, maxval });
        }
        Ok(Self {
            width,
            height,
            maxval,
            data,
        })
    }
}

fn flipped<T: Copy>(width: usize, height: usize, grid: &[T]) -> impl Iterator<Item = T> + '_ {
    (0..height)
        .rev()
        .flat_map(move |j| grid[j * width..(j + 1) * width].iter().copied())
}

pub fn class_image(o: &Observation, class: PixelClass) -> PgmImage {
    let (w, h) = (o.width(), o.height());
    PgmImage {
        width: w,
        height: h,
        maxval: 255,
        data: flipped(w, h, &o.classes)
            .map(|c| if c == class { 255 } else { 0 })
            .collect(),
    }
}

pub fn depth_image(o: &Observation) -> PgmImage {
    let (w, h) = (o.width(), o.height());
    PgmImage {
        width: w,
        height: h,
        maxval: 65535,
        data: flipped(w, h, &o.depth)
            .map(|d| (d * 10.0).round().clamp(0.0, 65535.0) as u16)
            .collect(),
    }
}

/// Writes `bag.pgm`, `rim.pgm`, `handle.pgm` and `depth.pgm` into `dir`.
/// The bag image marks every non-background pixel.
pub fn export_observation(o: &Observation, dir: &Path) -> Result<(), PgmError> {
    fs::create_dir_all(dir)?;
    let (w, h) = (o.width(), o.height());
    let bag = PgmImage {
        width: w,
        height: h,
        maxval: 255,
        data: flipped(w, h, &o.classes)
            .map(|c| if c.is_bag() { 255 } else { 0 })
            .collect(),
    };
    fs::write(dir.join("bag.pgm"), bag.encode())?;
    fs::write(
        dir.join("rim.pgm"),
        class_image(o, PixelClass::Rim).encode(),
    )?;
    fs::write(
        dir.join("handle.pgm"),
        class_image(o, PixelClass::Handle).encode(),
    )?;
    fs::write(dir.join("depth.pgm"), depth_image(o).encode())?;
    Ok(())
}
