//! 16-bit binary PGM images with a JSON scale sidecar, and binary PBM masks.
//!
//! A stored sample `s` decodes to `s · scale + offset`. `offset` is written
//! only for images with negative pixels and defaults to zero.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ascm::SarImage;
use crate::error::{OtsaError, Result};
use crate::positioning::TargetMask;

const MAX_SAMPLE: f64 = 65535.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub scale: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// `foo.pgm` → `foo.pgm.json`.
pub fn sidecar_path(image_path: &Path) -> PathBuf {
    let mut s = image_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Quantizes `image` to 16 bits. Returns the PGM bytes and the sidecar.
pub fn encode_pgm(image: &SarImage) -> Result<(Vec<u8>, ImageSidecar)> {
    if !image.is_finite() {
        return Err(OtsaError::param("cannot encode non-finite pixels"));
    }
    let min = image.pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let max = image.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let offset = if min < 0.0 { min } else { 0.0 };
    let range = max - offset;
    let scale = if range > 0.0 { range / MAX_SAMPLE } else { 1.0 };
    let mut out = format!("P5\n{} {}\n65535\n", image.cols, image.rows).into_bytes();
    out.reserve(image.pixels.len() * 2);
    for v in &image.pixels {
        let s = ((v - offset) / scale).round().clamp(0.0, MAX_SAMPLE) as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    Ok((
        out,
        ImageSidecar {
            scale,
            width: image.cols,
            height: image.rows,
            offset,
        },
    ))
}

/// Header tokenizer shared by PGM and PBM: magic, then whitespace-separated
/// integers with `#` comments, then exactly one whitespace byte.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8], magic: &str) -> Result<Self> {
        if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
            return Err(OtsaError::format("magic", format!("expected {magic}")));
        }
        Ok(Self { bytes, pos: 2 })
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<usize> {
        let start_pos = self.pos;
        self.skip_space();
        if self.pos == start_pos {
            return Err(OtsaError::format(field, "missing separator"));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(OtsaError::format(field, "expected a decimal integer"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|v| *v <= 1 << 24)
            .ok_or_else(|| OtsaError::format(field, "integer out of range"))
    }

    fn finish(mut self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(&self.bytes[self.pos..])
            }
            _ => Err(OtsaError::format("header", "missing whitespace before raster")),
        }
    }
}

pub fn decode_pgm(bytes: &[u8], sidecar: &ImageSidecar) -> Result<SarImage> {
    let mut h = Header::new(bytes, "P5")?;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(OtsaError::format("width", "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(OtsaError::format("maxval", "must lie in 1..=65535"));
    }
    let raster = h.finish()?;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bps))
        .ok_or_else(|| OtsaError::format("width", "dimensions overflow"))?;
    if raster.len() < need {
        return Err(OtsaError::format(
            "raster",
            format!("expected {need} bytes, found {}", raster.len()),
        ));
    }
    if sidecar.width != width {
        return Err(OtsaError::format("sidecar.width", "disagrees with PGM header"));
    }
    if sidecar.height != height {
        return Err(OtsaError::format("sidecar.height", "disagrees with PGM header"));
    }
    if !(sidecar.scale.is_finite() && sidecar.scale > 0.0) || !sidecar.offset.is_finite() {
        return Err(OtsaError::format("sidecar.scale", "must be finite and positive"));
    }
    let pixels = if bps == 2 {
        raster[..need]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) * sidecar.scale + sidecar.offset)
            .collect()
    } else {
        raster[..need]
            .iter()
            .map(|&b| f64::from(b) * sidecar.scale + sidecar.offset)
            .collect()
    };
    SarImage::from_pixels(height, width, pixels)
}

pub fn parse_sidecar(text: &str) -> Result<ImageSidecar> {
    serde_json::from_str(text).map_err(|e| OtsaError::format("sidecar", e.to_string()))
}

pub fn save_image(path: &Path, image: &SarImage) -> Result<()> {
    let (bytes, sidecar) = encode_pgm(image)?;
    std::fs::write(path, bytes).map_err(|e| OtsaError::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string(&sidecar).expect("sidecar serializes");
    std::fs::write(&side, text).map_err(|e| OtsaError::io(&side, e))
}

pub fn load_image(path: &Path) -> Result<SarImage> {
    let bytes = std::fs::read(path).map_err(|e| OtsaError::io(path, e))?;
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| OtsaError::io(&side, e))?;
    decode_pgm(&bytes, &parse_sidecar(&text)?)
}

/// Packs a mask as P4, most significant bit first, rows padded to bytes.
pub fn encode_pbm(mask: &TargetMask) -> Vec<u8> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let stride = cols.div_ceil(8);
    let mut out = format!("P4\n{cols} {rows}\n").into_bytes();
    let start = out.len();
    out.resize(start + stride * rows, 0);
    for (x, y) in mask.iter() {
        out[start + x * stride + y / 8] |= 0x80 >> (y % 8);
    }
    out
}

pub fn decode_pbm(bytes: &[u8]) -> Result<TargetMask> {
    let mut h = Header::new(bytes, "P4")?;
    let cols = h.number("width")?;
    let rows = h.number("height")?;
    if cols == 0 || rows == 0 {
        return Err(OtsaError::format("width", "zero mask dimension"));
    }
    let raster = h.finish()?;
    let stride = cols.div_ceil(8);
    if raster.len() < stride * rows {
        return Err(OtsaError::format(
            "raster",
            format!("expected {} bytes, found {}", stride * rows, raster.len()),
        ));
    }
    let mut coords = Vec::new();
    for x in 0..rows {
        for y in 0..cols {
            if raster[x * stride + y / 8] & (0x80 >> (y % 8)) != 0 {
                coords.push((x, y));
            }
        }
    }
    TargetMask::new(rows, cols, coords)
}

pub fn save_mask(path: &Path, mask: &TargetMask) -> Result<()> {
    std::fs::write(path, encode_pbm(mask)).map_err(|e| OtsaError::io(path, e))
}

pub fn load_mask(path: &Path) -> Result<TargetMask> {
    let bytes = std::fs::read(path).map_err(|e| OtsaError::io(path, e))?;
    decode_pbm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_header_and_byte_order() {
        let img = SarImage::from_pixels(1, 2, vec![0.0, 1.0]).unwrap();
        let (bytes, side) = encode_pgm(&img).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0xff, 0xff]);
        assert_eq!(side.offset, 0.0);
        let json = serde_json::to_string(&side).unwrap();
        assert!(!json.contains("offset"), "{json}");
        assert_eq!(decode_pgm(&bytes, &side).unwrap(), img);
    }

    #[test]
    fn negative_pixels_use_offset() {
        let img = SarImage::from_pixels(1, 3, vec![-0.5, 0.0, 0.25]).unwrap();
        let (bytes, side) = encode_pgm(&img).unwrap();
        assert_eq!(side.offset, -0.5);
        let back = decode_pgm(&bytes, &side).unwrap();
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() <= 0.75 * 2f64.powi(-16));
        }
    }

    #[test]
    fn pgm_rejects_bad_input() {
        let img = SarImage::from_pixels(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (bytes, side) = encode_pgm(&img).unwrap();
        let field = |r: Result<SarImage>| match r {
            Err(OtsaError::Format { field, .. }) => field,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(field(decode_pgm(b"P6\n2 2\n255\n", &side)), "magic");
        assert_eq!(field(decode_pgm(&bytes[..bytes.len() - 1], &side)), "raster");
        assert_eq!(field(decode_pgm(b"P5\nx 2\n65535\n", &side)), "width");
        assert_eq!(field(decode_pgm(b"P5\n2 2\n70000\n", &side)), "maxval");
        let wrong = ImageSidecar { width: 3, ..side };
        assert_eq!(field(decode_pgm(&bytes, &wrong)), "sidecar.width");
        assert!(parse_sidecar("{\"scale\": 1.0}").is_err());
    }

    #[test]
    fn pbm_rejects_bad_input() {
        let m = TargetMask::new(3, 10, [(0, 0), (2, 9)]).unwrap();
        let bytes = encode_pbm(&m);
        assert!(bytes.starts_with(b"P4\n10 3\n"));
        assert_eq!(decode_pbm(&bytes).unwrap(), m);
        assert!(decode_pbm(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_pbm(b"P1\n1 1\n1").is_err());
        assert!(decode_pbm(b"P4\n0 1\n").is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip_error_bound(pixels in prop::collection::vec(0.0..5.0f64, 1..200)) {
            let n = pixels.len();
            let img = SarImage::from_pixels(1, n, pixels).unwrap();
            let (bytes, side) = encode_pgm(&img).unwrap();
            let back = decode_pgm(&bytes, &side).unwrap();
            let max = img.max();
            for (a, b) in img.pixels.iter().zip(&back.pixels) {
                prop_assert!((a - b).abs() <= max * 2f64.powi(-15));
            }
        }

        #[test]
        fn pbm_round_trip(rows in 1usize..20, cols in 1usize..20, bits in prop::collection::vec(any::<bool>(), 400)) {
            let coords = (0..rows).flat_map(|x| (0..cols).map(move |y| (x, y)))
                .filter(|(x, y)| bits[x * 20 + y]);
            let m = TargetMask::new(rows, cols, coords).unwrap();
            prop_assert_eq!(decode_pbm(&encode_pbm(&m)).unwrap(), m);
        }
    }
}
