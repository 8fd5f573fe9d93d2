//! ASCII PGM (P2). Pixel values are scaled to `[0,1]` by maxval on read and
//! quantized to 0..=255 on write.

use std::io::Write;

use super::Image;
use crate::error::{Error, Result};

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    /// Next whitespace-delimited token and its byte offset; `#` starts a comment.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        // non-UTF8 bytes fail the numeric parse below with the right offset
        let tok = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("\u{fffd}");
        Some((start, tok))
    }

    fn number(&mut self, what: &str) -> Result<(usize, u64)> {
        let (offset, tok) = self.next().ok_or(Error::Pgm {
            offset: self.bytes.len(),
            reason: format!("unexpected end of file, expected {what}"),
        })?;
        let v = tok.parse::<u64>().map_err(|_| Error::Pgm {
            offset,
            reason: format!("expected {what}, found `{tok}`"),
        })?;
        Ok((offset, v))
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    let mut t = Tokens { bytes, pos: 0 };
    match t.next() {
        Some((_, "P2")) => {}
        Some((offset, tok)) => {
            return Err(Error::Pgm {
                offset,
                reason: format!("expected magic `P2`, found `{tok}`"),
            })
        }
        None => {
            return Err(Error::Pgm {
                offset: 0,
                reason: "empty file".into(),
            })
        }
    }
    let (wo, width) = t.number("width")?;
    let (ho, height) = t.number("height")?;
    let (mo, maxval) = t.number("maxval")?;
    if width == 0 {
        return Err(Error::Pgm { offset: wo, reason: "width must be ≥ 1".into() });
    }
    if height == 0 {
        return Err(Error::Pgm { offset: ho, reason: "height must be ≥ 1".into() });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Pgm { offset: mo, reason: format!("maxval {maxval} outside 1..=65535") });
    }
    let count = (width * height) as usize;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let (offset, v) = t.number("pixel value")?;
        if v > maxval {
            return Err(Error::Pgm { offset, reason: format!("pixel {v} exceeds maxval {maxval}") });
        }
        data.push(v as f64 / maxval as f64);
    }
    if let Some((offset, tok)) = t.next() {
        return Err(Error::Pgm { offset, reason: format!("trailing data `{tok}`") });
    }
    Image::new(height as usize, width as usize, data)
}

/// Writes `image` (values in `[0,1]`) with maxval 255.
pub fn write_pgm<W: Write>(image: &Image, mut out: W) -> Result<()> {
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid("image", format!("value {v} outside [0,1]; cannot encode as PGM")));
    }
    writeln!(out, "P2")?;
    writeln!(out, "{} {}", image.width(), image.height())?;
    writeln!(out, "255")?;
    for r in 0..image.height() {
        let row: Vec<String> = (0..image.width())
            .map(|c| ((image.get(r, c) * 255.0).round() as u32).to_string())
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}
