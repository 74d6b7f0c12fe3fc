//! Frame persistence.
//!
//! RGB frames are binary PPM (`P6`, maxval 255). Depth frames use a 16-byte
//! header followed by row-major `f32` samples, all little-endian:
//!
//! | offset | size | field                 |
//! |-------:|-----:|-----------------------|
//! | 0      | 4    | magic `DPTH`          |
//! | 4      | 4    | width (u32)           |
//! | 8      | 4    | height (u32)          |
//! | 12     | 4    | max_range (f32)       |
//! | 16     | 4·wh | depth in meters (f32) |

use std::path::Path;

use super::{DepthImage, RgbImage};
use crate::error::{Error, Result};

pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let bad = |m: &str| Error::Protocol(format!("PPM: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P6" {
        return Err(bad("missing P6 magic"));
    }
    let parse = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
    RgbImage::new(w, h, data.to_vec()).map_err(|_| bad("pixel data length mismatch"))
}

pub fn encode_depth(img: &DepthImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.data.len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&img.width.to_le_bytes());
    out.extend_from_slice(&img.height.to_le_bytes());
    out.extend_from_slice(&img.max_range.to_le_bytes());
    for d in &img.data {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthImage> {
    if bytes.len() < 16 || &bytes[0..4] != DEPTH_MAGIC {
        return Err(Error::Protocol("DPTH: bad header".into()));
    }
    let u32_at = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
    let w = u32_at(4);
    let h = u32_at(8);
    let max_range = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let body = &bytes[16..];
    if body.len() != w as usize * h as usize * 4 {
        return Err(Error::Protocol("DPTH: payload length mismatch".into()));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DepthImage::new(w, h, max_range, data).map_err(|e| Error::Protocol(format!("DPTH: {e}")))
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    Ok(std::fs::write(path, encode_ppm(img))?)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&std::fs::read(path)?)
}

pub fn write_depth(path: &Path, img: &DepthImage) -> Result<()> {
    Ok(std::fs::write(path, encode_depth(img))?)
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    decode_depth(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = RgbImage::new(2, 1, vec![1, 2, 3, 250, 251, 10]).unwrap();
        let bytes = encode_ppm(&img);
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn ppm_with_comment() {
        let bytes = b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03";
        assert_eq!(decode_ppm(bytes).unwrap().data, vec![1, 2, 3]);
    }

    #[test]
    fn depth_layout_is_bit_exact() {
        let img = DepthImage::new(2, 1, 5.0, vec![1.0, 6.0]).unwrap();
        let bytes = encode_depth(&img);
        let mut expected = b"DPTH".to_vec();
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&[0x00, 0x00, 0xa0, 0x40]);
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]);
        expected.extend_from_slice(&[0x00, 0x00, 0xc0, 0x40]);
        assert_eq!(bytes, expected);
        assert_eq!(decode_depth(&bytes).unwrap(), img);
    }

    #[test]
    fn depth_rejects_bad_input() {
        assert!(decode_depth(b"DPTX\0\0\0\0\0\0\0\0\0\0\0\0").is_err());
        let mut bytes = encode_depth(&DepthImage::sentinel_filled(2, 2, 5.0));
        bytes.pop();
        assert!(decode_depth(&bytes).is_err());
    }
}
