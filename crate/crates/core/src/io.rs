//! Netpbm image files (binary PGM/PPM, 8-bit, 0 = black) and JSON helpers.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Grid, Image};

/// Rounds to the nearest 8-bit level, the precision images are stored at.
pub fn quantize(v: f64) -> f64 {
    to_byte(v) as f64 / 255.0
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn quantize_image(img: &Image) -> Image {
    img.map(|&v| quantize(v))
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(img.as_slice().iter().map(|&v| to_byte(v)));
    out
}

pub fn encode_ppm(planes: &[Image]) -> Result<Vec<u8>> {
    if planes.len() != 3 || !planes.iter().all(|p| p.same_shape(&planes[0])) {
        return Err(Error::Param("PPM needs three planes of one shape".into()));
    }
    let mut out = format!("P6\n{} {}\n255\n", planes[0].cols(), planes[0].rows()).into_bytes();
    for i in 0..planes[0].len() {
        out.extend(planes.iter().map(|p| to_byte(p.as_slice()[i])));
    }
    Ok(out)
}

fn parse_header<'a>(bytes: &'a [u8], magic: &str) -> std::result::Result<(usize, usize, &'a [u8]), String> {
    // magic, width, height, maxval separated by whitespace (comments allowed), then one whitespace byte
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if fields[0] != magic {
        return Err(format!("expected {magic}, found {}", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(format!("only 8-bit files are supported (maxval {max})"));
    }
    Ok((w, h, bytes.get(i + 1..).unwrap_or(&[])))
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let (w, h, data) = parse_header(bytes, "P5")?;
    if data.len() != w * h {
        return Err(format!("expected {} pixel bytes, found {}", w * h, data.len()));
    }
    Grid::from_vec(h, w, data.iter().map(|&b| b as f64 / 255.0).collect()).map_err(|e| e.to_string())
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Vec<Image>, String> {
    let (w, h, data) = parse_header(bytes, "P6")?;
    if data.len() != 3 * w * h {
        return Err(format!("expected {} pixel bytes, found {}", 3 * w * h, data.len()));
    }
    Ok((0..3).map(|k| Grid::from_fn(h, w, |r, c| data[3 * (r * w + c) + k] as f64 / 255.0)).collect())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    write_bytes(path, &encode_pgm(img))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    decode_pgm(&read_bytes(path)?).map_err(|m| Error::Data(format!("{}: {m}", path.display())))
}

pub fn write_ppm(path: &Path, planes: &[Image]) -> Result<()> {
    write_bytes(path, &encode_ppm(planes)?)
}

pub fn read_ppm(path: &Path) -> Result<Vec<Image>> {
    decode_ppm(&read_bytes(path)?).map_err(|m| Error::Data(format!("{}: {m}", path.display())))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_json_pretty(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_exact_after_quantization() {
        let img = Grid::from_fn(5, 7, |r, c| ((r * 7 + c) as f64 / 34.0).powf(1.3));
        let q = quantize_image(&img);
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), q);
        assert_eq!(quantize_image(&q), q);
    }

    #[test]
    fn ppm_round_trip() {
        let planes: Vec<Image> = (0..3).map(|k| Grid::from_fn(3, 4, |r, c| quantize((r + c + k) as f64 / 9.0))).collect();
        assert_eq!(decode_ppm(&encode_ppm(&planes).unwrap()).unwrap(), planes);
    }

    #[test]
    fn header_comments_and_errors() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0]);
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
