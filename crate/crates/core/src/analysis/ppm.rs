use std::io::{Read, Write};

use super::{AnalysisError, Result};
use crate::sprite::Image;

/// RGB pixel buffer of arbitrary width and height, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(AnalysisError::Invalid(format!(
                "{} bytes do not form a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Sub-image `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(AnalysisError::Invalid("crop outside image".into()));
        }
        let mut pixels = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + w * 3]);
        }
        Raster::new(w, h, pixels)
    }
}

impl From<&Image> for Raster {
    fn from(im: &Image) -> Self {
        Self {
            width: im.size(),
            height: im.size(),
            pixels: im.pixels().to_vec(),
        }
    }
}

/// Binary PPM (P6, maxval 255).
pub fn write_ppm(mut w: impl Write, r: &Raster) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", r.width, r.height)?;
    w.write_all(&r.pixels)?;
    Ok(())
}

/// Reads a P6 file with maxval 255; `#` comments in the header are skipped.
pub fn read_ppm(mut r: impl Read) -> Result<Raster> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let err = |offset: usize, m: &str| AnalysisError::Format {
        offset,
        message: m.to_string(),
    };
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                        *pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(_) => break,
                None => return Err(err(*pos, "unexpected end of header")),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            *pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if token(&mut pos)? != "P6" {
        return Err(err(0, "not a binary PPM (P6)"));
    }
    let number = |pos: &mut usize| -> Result<usize> {
        let at = *pos;
        token(pos)?.parse().map_err(|_| err(at, "expected a decimal number"))
    };
    let width = number(&mut pos)?;
    let height = number(&mut pos)?;
    let maxval_at = pos;
    if number(&mut pos)? != 255 {
        return Err(err(maxval_at, "only maxval 255 is supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height * 3;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != need {
        return Err(err(pos + body.len().min(need), &format!("expected {need} pixel bytes, found {}", body.len())));
    }
    Raster::new(width, height, body.to_vec())
}
