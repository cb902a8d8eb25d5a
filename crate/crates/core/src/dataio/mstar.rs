//! Phoenix header parsing for MSTAR-style files.
//!
//! The header is ASCII `Key= value` lines opened by `[PhoenixHeaderVer..]`
//! and closed by `[EndofPhoenixHeader]`. Image data starts after
//! `PhoenixHeaderLength` bytes plus `NativeHeaderLength` when declared.
//! Sample decoding is best effort: big-endian `f32` magnitudes, row-major.

use crate::ascm::SarImage;
use crate::error::{OtsaError, Result};

const SENTINEL: &str = "[PhoenixHeaderVer";
const END_MARKER: &str = "[EndofPhoenixHeader]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MstarHeader {
    /// Key/value pairs in file order.
    pub fields: Vec<(String, String)>,
    pub data_offset: usize,
}

impl MstarHeader {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| OtsaError::format(key, format!("not a non-negative integer: {v:?}")))
            })
            .transpose()
    }

    /// `(rows, cols)` when both `NumberOfRows` and `NumberOfColumns` exist.
    pub fn dimensions(&self) -> Result<Option<(usize, usize)>> {
        match (self.get_usize("NumberOfRows")?, self.get_usize("NumberOfColumns")?) {
            (Some(r), Some(c)) => Ok(Some((r, c))),
            _ => Ok(None),
        }
    }
}

pub fn parse_mstar_header(bytes: &[u8]) -> Result<MstarHeader> {
    if !bytes.starts_with(SENTINEL.as_bytes()) {
        return Err(OtsaError::UnsupportedFormat(
            "missing [PhoenixHeaderVer sentinel".into(),
        ));
    }
    let mut fields = Vec::new();
    let mut pos = 0;
    let mut closed = false;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| pos + i);
        let line = String::from_utf8_lossy(&bytes[pos..end]);
        let line = line.trim_end_matches('\r').trim();
        pos = end + 1;
        if line.starts_with(END_MARKER) {
            closed = true;
            break;
        }
        if line.starts_with('[') || line.is_empty() {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            fields.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    if !closed && fields.is_empty() {
        return Err(OtsaError::UnsupportedFormat("empty Phoenix header".into()));
    }
    let mut header = MstarHeader {
        fields,
        data_offset: 0,
    };
    let phoenix = header.get_usize("PhoenixHeaderLength")?.ok_or_else(|| {
        OtsaError::UnsupportedFormat("missing PhoenixHeaderLength field".into())
    })?;
    let native = header.get_usize("NativeHeaderLength")?.unwrap_or(0);
    header.data_offset = phoenix
        .checked_add(native)
        .ok_or_else(|| OtsaError::format("NativeHeaderLength", "offset overflows"))?;
    Ok(header)
}

/// Builds a header with the given fields, padded with spaces to
/// `PhoenixHeaderLength` bytes. `fields` must not contain that key.
pub fn synthesize_mstar_header(fields: &[(&str, &str)], header_length: usize) -> Vec<u8> {
    let mut text = String::from("[PhoenixHeaderVer01.04]\n");
    text.push_str(&format!("PhoenixHeaderLength= {header_length:06}\n"));
    for (k, v) in fields {
        text.push_str(&format!("{k}= {v}\n"));
    }
    text.push_str(END_MARKER);
    text.push('\n');
    let mut bytes = text.into_bytes();
    if bytes.len() < header_length {
        bytes.resize(header_length, b' ');
    }
    bytes
}

/// Decodes the magnitude block following the header.
pub fn decode_mstar_magnitude(bytes: &[u8], header: &MstarHeader) -> Result<SarImage> {
    let (rows, cols) = header.dimensions()?.ok_or_else(|| {
        OtsaError::UnsupportedFormat("header lacks NumberOfRows/NumberOfColumns".into())
    })?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| OtsaError::format("NumberOfColumns", "dimensions overflow"))?;
    let need = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(header.data_offset))
        .ok_or_else(|| OtsaError::format("NumberOfColumns", "dimensions overflow"))?;
    if count == 0 || bytes.len() < need {
        return Err(OtsaError::format(
            "image data",
            format!("need {need} bytes, have {}", bytes.len()),
        ));
    }
    let pixels: Vec<f64> = bytes[header.data_offset..need]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_be_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(OtsaError::format("image data", "non-finite magnitude sample"));
    }
    SarImage::from_pixels(rows, cols, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_length_is_offset() {
        let bytes = synthesize_mstar_header(&[], 512);
        assert_eq!(bytes.len(), 512);
        assert_eq!(parse_mstar_header(&bytes).unwrap().data_offset, 512);
    }

    #[test]
    fn missing_sentinel_or_length() {
        assert!(matches!(
            parse_mstar_header(b"PhoenixHeaderLength= 512\n"),
            Err(OtsaError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse_mstar_header(b"[PhoenixHeaderVer01.04]\nA= 1\n[EndofPhoenixHeader]\n"),
            Err(OtsaError::UnsupportedFormat(_))
        ));
        assert!(parse_mstar_header(b"[PhoenixHeaderVer01.04]\nPhoenixHeaderLength= abc\n").is_err());
    }

    #[test]
    fn fields_round_trip_and_decode() {
        let fields = [
            ("Filename", "HB03333.015"),
            ("TargetType", "t72_tank"),
            ("NumberOfColumns", "3"),
            ("NumberOfRows", "2"),
            ("DesiredDepression", "15"),
        ];
        let mut bytes = synthesize_mstar_header(&fields, 400);
        let h = parse_mstar_header(&bytes).unwrap();
        for (k, v) in fields {
            assert_eq!(h.get(k), Some(v));
        }
        assert_eq!(h.fields.len(), 6);
        assert!(decode_mstar_magnitude(&bytes, &h).is_err());
        for v in [0.5f32, 1.0, 2.0, 0.25, 0.0, 3.5] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = decode_mstar_magnitude(&bytes, &h).unwrap();
        assert_eq!(img.dims(), (2, 3));
        assert_eq!(img.at(1, 2), 3.5);
    }

    #[test]
    fn native_length_is_added() {
        let bytes = synthesize_mstar_header(&[("NativeHeaderLength", "100")], 300);
        assert_eq!(parse_mstar_header(&bytes).unwrap().data_offset, 400);
    }
}
