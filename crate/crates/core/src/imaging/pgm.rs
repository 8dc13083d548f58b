//! Netpbm greymap (P2 / P5) reading and P5 writing.

use super::{EdgeMap, Image};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("PGM parse error at byte {offset}: {message}")]
pub struct PgmError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: impl Into<String>) -> PgmError {
    PgmError {
        offset,
        message: message.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                err(self.pos, format!("unexpected end of data, expected {what}"))
            } else {
                err(self.pos, format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, format!("{what} out of range")))
    }
}

/// Parses a binary (P5) or ASCII (P2) greymap with `maxval <= 255`.
/// Sample values are kept as stored; they are not rescaled to 255.
pub fn load_pgm(bytes: &[u8]) -> Result<Image, PgmError> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(err(0, "missing P2/P5 magic number")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(cur.pos)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(err(cur.pos, "expected whitespace after magic number"));
    }
    let width_at = cur.pos;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    if width == 0 || height == 0 {
        return Err(err(width_at, "image dimensions must be positive"));
    }
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(err(maxval_at, format!("maxval {maxval} not in 1..=255")));
    }
    let count = width as usize * height as usize;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        if !cur.bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(err(cur.pos, "expected single whitespace before raster"));
        }
        let start = cur.pos + 1;
        let end = start + count;
        if end > bytes.len() {
            return Err(err(
                bytes.len(),
                format!(
                    "truncated raster: need {count} bytes, found {}",
                    bytes.len().saturating_sub(start)
                ),
            ));
        }
        for (i, &b) in bytes[start..end].iter().enumerate() {
            if u32::from(b) > maxval {
                return Err(err(
                    start + i,
                    format!("sample {b} exceeds maxval {maxval}"),
                ));
            }
            pixels.push(f64::from(b));
        }
    } else {
        for _ in 0..count {
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(err(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(f64::from(v));
        }
    }
    Ok(Image {
        width: width as usize,
        height: height as usize,
        pixels,
    })
}

/// Binary P5 with maxval 255; values are rounded and clamped to `0..=255`.
pub fn write_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(
        img.pixels
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// Edge pixels as 255, background as 0.
pub fn write_edge_pgm(edges: &EdgeMap) -> Vec<u8> {
    write_pgm(&edges.to_image())
}
