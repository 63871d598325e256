//! 8-bit grayscale images and binary PGM (P5) I/O.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be positive"));
        }
        if width * height != pixels.len() {
            return Err(Error::param(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut px = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                px.push(f(r, c));
            }
        }
        Self::new(width, height, px)
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
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.pixels[row * self.width + col] = v;
    }

    /// SHA-256 over the dimensions (little-endian u64) followed by the pixels.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        h.update(&self.pixels);
        h.finalize().into()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Interleaved 8-bit color image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

/// Parses a binary PGM (P5) with maxval ≤ 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Parse {
            offset: 0,
            message: "missing P5 magic".into(),
        });
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for (fi, name) in ["width", "height", "maxval"].iter().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while matches!(bytes.get(pos), Some(b) if b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse {
                offset: pos,
                message: format!("expected {name}"),
            });
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        fields[fi] = text.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("{name} out of range"),
        })?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::Parse {
                offset: pos,
                message: "expected single whitespace after maxval".into(),
            })
        }
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(Error::Parse {
            offset: pos,
            message: "zero image dimension".into(),
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse {
            offset: pos,
            message: format!("unsupported maxval {maxval}"),
        });
    }
    let need = w * h;
    let have = bytes.len() - pos;
    if have < need {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated payload: expected {need} bytes, found {have}"),
        });
    }
    GrayImage::new(w, h, bytes[pos..pos + need].to_vec())
}

/// Reads a PGM directly; other formats (PNG, JPEG) are decoded and converted to luminance.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return parse_pgm(&bytes);
    }
    let rgb = image::load_from_memory(&bytes)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    crate::manipulation::to_grayscale(&ColorImage {
        width: w as usize,
        height: h as usize,
        channels: 3,
        data: rgb.into_raw(),
    })
}

pub fn write_image(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, image.to_pgm()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_header() {
        let mut b = b"P5\n2 2\n255\n".to_vec();
        b.extend_from_slice(&[1, 2, 3, 4]);
        let img = parse_pgm(&b).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[1, 2, 3, 4]);
    }

    #[test]
    fn comments_are_skipped() {
        let mut b = b"P5 # made by hand\n3 1 # size\n255\n".to_vec();
        b.extend_from_slice(&[7, 8, 9]);
        assert_eq!(parse_pgm(&b).unwrap().pixels(), &[7, 8, 9]);
    }

    #[test]
    fn truncated_payload_reports_counts() {
        let mut b = b"P5\n2 2\n255\n".to_vec();
        b.extend_from_slice(&[1, 2, 3]);
        let err = parse_pgm(&b).unwrap_err().to_string();
        assert!(err.contains("expected 4 bytes, found 3"), "{err}");
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            parse_pgm(b"P6\n1 1\n255\n\0"),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(7, 5, |r, c| (r * 31 + c * 17) as u8).unwrap();
        let p = dir.path().join("sub/a.pgm");
        write_image(&img, &p).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
    }

    #[test]
    fn png_ingestion_converts_to_luma() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("red.png");
        let buf = image::RgbImage::from_pixel(3, 2, image::Rgb([255, 0, 0]));
        buf.save(&p).unwrap();
        let g = read_image(&p).unwrap();
        assert!(g.pixels().iter().all(|&v| v == 76));
    }
}
