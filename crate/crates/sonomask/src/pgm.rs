//! Binary PGM (P5) reading and writing — the only on-disk image format the
//! pipeline uses. Masks ride the same format: foreground saves as 255 and
//! loads as intensity >= 128.

use std::path::Path;

use crate::imaging::{BinaryMask, Image};
use crate::{Error, Result};

fn is_pnm_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c)
}

struct HeaderScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderScanner<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if is_pnm_whitespace(b) {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    /// Next whitespace-delimited token, leaving the delimiter unconsumed.
    fn token(&mut self, field: &str) -> std::result::Result<&'a [u8], String> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !is_pnm_whitespace(self.bytes[self.pos])
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(format!("missing {field}"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, field: &str) -> std::result::Result<u32, String> {
        let raw = self.token(field)?;
        std::str::from_utf8(raw)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| format!("{field} is not a decimal number: {:?}", String::from_utf8_lossy(raw)))
    }
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut scanner = HeaderScanner { bytes, pos: 0 };
    let magic = scanner.token("magic")?;
    if magic != b"P5" {
        return Err(format!(
            "bad magic {:?}, expected \"P5\" (binary PGM)",
            String::from_utf8_lossy(magic)
        ));
    }
    let width = scanner.number("width")?;
    let height = scanner.number("height")?;
    if width == 0 || height == 0 {
        return Err(format!("dimensions must be positive, got {width}x{height}"));
    }
    let maxval = scanner.number("maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, this reader requires 255"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if scanner.pos >= bytes.len() || !is_pnm_whitespace(bytes[scanner.pos]) {
        return Err("missing whitespace after maxval".to_string());
    }
    let raster = &bytes[scanner.pos + 1..];
    let expected = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| format!("raster size overflows for {width}x{height}"))?;
    if raster.len() < expected {
        return Err(format!("truncated raster: {} bytes, need {expected}", raster.len()));
    }
    if raster.len() > expected {
        return Err(format!("{} trailing bytes after the raster", raster.len() - expected));
    }
    Image::new(width, height, raster.to_vec()).map_err(|e| e.to_string())
}

fn encode_pgm(img: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.pixels());
    out
}

/// Loads a binary PGM (magic "P5", maxval 255) grayscale image.
pub fn load_image_pgm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    parse_pgm(&bytes).map_err(|message| Error::parse(path, message))
}

/// Writes the image as binary PGM; [`load_image_pgm`] reads it back
/// pixel-identically.
pub fn save_image_pgm(img: &Image, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// Loads a mask from PGM: intensity >= 128 is foreground.
pub fn load_mask_pgm(path: &Path) -> Result<BinaryMask> {
    let img = load_image_pgm(path)?;
    let bits = img.pixels().iter().map(|&v| v >= 128).collect();
    BinaryMask::new(img.width(), img.height(), bits)
}

/// Writes a mask as PGM with foreground 255 and background 0; bit-exact
/// round-trip with [`load_mask_pgm`].
pub fn save_mask_pgm(mask: &BinaryMask, path: &Path) -> Result<()> {
    let pixels = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = Image::new(mask.width(), mask.height(), pixels)?;
    save_image_pgm(&img, path)
}
