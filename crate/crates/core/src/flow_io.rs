//! Middlebury `.flo` flow files and binary PNM (P5/P6) images.
//!
//! `.flo` layout, all little-endian:
//!
//! ```text
//! [f32 magic = 202021.25][i32 width][i32 height][width*height × (f32 x, f32 y), row-major]
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoundaryMask, Flow, FlowField, Grid, LabelGrid, Shape};
use crate::scalar::Scalar;

pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_HEADER_LEN: usize = 12;
pub const DEFAULT_MAX_PIXELS: usize = 100_000_000;

/// Parsed `.flo` header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloHeader {
    pub width: usize,
    pub height: usize,
}

impl FloHeader {
    pub fn parse(bytes: &[u8], max_pixels: usize) -> Result<Self> {
        if bytes.len() < FLO_HEADER_LEN {
            return Err(Error::format(
                bytes.len(),
                format!("header needs {FLO_HEADER_LEN} bytes, stream has {}", bytes.len()),
            ));
        }
        let word = |at: usize| [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]];
        if f32::from_le_bytes(word(0)).to_bits() != FLO_MAGIC.to_bits() {
            return Err(Error::format(0, "bad magic, expected 202021.25"));
        }
        let width = i32::from_le_bytes(word(4));
        let height = i32::from_le_bytes(word(8));
        if width <= 0 {
            return Err(Error::format(4, format!("width {width} must be positive")));
        }
        if height <= 0 {
            return Err(Error::format(8, format!("height {height} must be positive")));
        }
        let (width, height) = (width as usize, height as usize);
        if width.saturating_mul(height) > max_pixels {
            return Err(Error::format(
                4,
                format!("{width}x{height} exceeds the {max_pixels}-pixel cap"),
            ));
        }
        Ok(FloHeader { width, height })
    }
}

pub fn read_flo(bytes: &[u8]) -> Result<FlowField<f32>> {
    read_flo_capped(bytes, DEFAULT_MAX_PIXELS)
}

/// Like [`read_flo`] with an explicit pixel cap on the declared size.
pub fn read_flo_capped(bytes: &[u8], max_pixels: usize) -> Result<FlowField<f32>> {
    let header = FloHeader::parse(bytes, max_pixels)?;
    let n = header.width * header.height;
    let expected = FLO_HEADER_LEN + n * 8;
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len(),
            format!("truncated payload: {expected} bytes expected, {} present", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(expected, "trailing bytes after payload"));
    }
    let values = bytes[FLO_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| {
            Flow::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    Grid::new(Shape::new(header.height, header.width), values)
}

/// Serializes a field as `.flo`; components are stored as `f32`.
pub fn write_flo<S: Scalar>(field: &FlowField<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(FLO_HEADER_LEN + field.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width() as i32).to_le_bytes());
    out.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for v in field.iter() {
        out.extend_from_slice(&(v.x.as_f64() as f32).to_le_bytes());
        out.extend_from_slice(&(v.y.as_f64() as f32).to_le_bytes());
    }
    out
}

fn pnm(kind: &str, shape: Shape, payload: &[u8]) -> Vec<u8> {
    let mut out = format!("{kind}\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    out.extend_from_slice(payload);
    out
}

/// Binary mask as P5: 0 → 0, 1 → 255.
pub fn write_mask_image(mask: &BoundaryMask) -> Vec<u8> {
    let payload: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    pnm("P5", mask.shape(), &payload)
}

/// Palette entry for `label` out of `k`: 0 is black, labels 1..k−1 take evenly spaced
/// fully saturated hues starting at red.
pub fn label_color(label: u32, k: usize) -> [u8; 3] {
    if label == 0 {
        return [0, 0, 0];
    }
    let steps = k.saturating_sub(1).max(1) as f64;
    let hue = 360.0 * f64::from(label - 1) / steps;
    hsv_to_rgb(hue, 1.0, 1.0)
}

/// Label grid as P6 using [`label_color`].
pub fn write_label_image(labels: &LabelGrid, k: usize) -> Vec<u8> {
    let payload: Vec<u8> = labels.iter().flat_map(|&l| label_color(l, k)).collect();
    pnm("P6", labels.shape(), &payload)
}

/// `hue` in degrees, `sat`/`val` in [0, 1].
fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let c = val * sat;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    let to_byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to_byte(r), to_byte(g), to_byte(b)]
}

/// Color-wheel rendering as P6.
///
/// Hue is the image-plane direction `atan2(y, x)`; saturation is the magnitude
/// divided by the field's largest magnitude; value is 1. Zero vectors are white.
pub fn write_flow_visualization<S: Scalar>(field: &FlowField<S>) -> Vec<u8> {
    let max = field.iter().map(|v| v.norm().as_f64()).fold(0.0, f64::max);
    let payload: Vec<u8> = field
        .iter()
        .flat_map(|v| {
            let mag = v.norm().as_f64();
            if mag == 0.0 || max == 0.0 {
                return [255, 255, 255];
            }
            let hue = v.y.as_f64().atan2(v.x.as_f64()).to_degrees();
            hsv_to_rgb(hue, mag / max, 1.0)
        })
        .collect();
    pnm("P6", field.shape(), &payload)
}

/// Parsed P5/P6 image with maxval 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub channels: usize,
    pub shape: Shape,
    pub pixels: Vec<u8>,
}

/// Reads a binary P5 or P6 image with maxval 255. `#` comments in the header are allowed.
pub fn read_pnm(bytes: &[u8]) -> Result<PnmImage> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos, "truncated PNM header"));
        }
        tokens.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let channels = match tokens[0].1 {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(Error::format(0, "expected P5 or P6 magic")),
    };
    let num = |i: usize| -> Result<usize> {
        tokens[i]
            .1
            .parse::<usize>()
            .map_err(|_| Error::format(tokens[i].0, format!("bad header number `{}`", tokens[i].1)))
    };
    let (width, height, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(Error::format(tokens[3].0, "only maxval 255 is supported"));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(tokens[1].0, "empty image"));
    }
    let need = width * height * channels;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != need {
        return Err(Error::format(
            pos,
            format!("payload is {} bytes, expected {need}", payload.len()),
        ));
    }
    Ok(PnmImage {
        channels,
        shape: Shape::new(height, width),
        pixels: payload.to_vec(),
    })
}

/// Reads a P5 mask; any non-zero pixel is foreground.
pub fn read_mask_image(bytes: &[u8]) -> Result<BoundaryMask> {
    let img = read_pnm(bytes)?;
    if img.channels != 1 {
        return Err(Error::format(0, "mask images must be P5"));
    }
    Grid::new(img.shape, img.pixels.iter().map(|&v| v != 0).collect())
}

/// Writes `bytes` to `path` through a sibling temp file and a rename, so a failed
/// write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::domain(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flo_bytes(magic: f32, w: i32, h: i32, payload: &[f32]) -> Vec<u8> {
        let mut b = magic.to_le_bytes().to_vec();
        b.extend_from_slice(&w.to_le_bytes());
        b.extend_from_slice(&h.to_le_bytes());
        for v in payload {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn smallest_file() {
        let f = read_flo(&flo_bytes(FLO_MAGIC, 1, 1, &[1.0, -2.0])).unwrap();
        assert_eq!(f.shape(), Shape::new(1, 1));
        assert_eq!(f.as_slice(), &[Flow::new(1.0, -2.0)]);
        assert_eq!(&flo_bytes(FLO_MAGIC, 0, 0, &[])[..4], b"PIEH");
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            read_flo(&flo_bytes(0.0, 1, 1, &[0.0, 0.0])),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(read_flo(&[1, 2, 3]), Err(Error::Format { offset: 3, .. })));
        assert!(matches!(
            read_flo(&flo_bytes(FLO_MAGIC, 2, 1, &[0.0, 0.0, 1.0])),
            Err(Error::Format { offset: 24, .. })
        ));
        assert!(matches!(
            read_flo(&flo_bytes(FLO_MAGIC, -1, 1, &[])),
            Err(Error::Format { offset: 4, .. })
        ));
        assert!(matches!(
            read_flo(&flo_bytes(FLO_MAGIC, 1, 1, &[0.0, 0.0, 5.0])),
            Err(Error::Format { offset: 20, .. })
        ));
        assert!(matches!(
            read_flo(&flo_bytes(FLO_MAGIC, 2, 1, &[0.0, 0.0, f32::NAN, 0.0])),
            Err(Error::Validation { row: 0, col: 1, .. })
        ));
        assert!(read_flo_capped(&flo_bytes(FLO_MAGIC, 4, 4, &[0.0; 32]), 15).is_err());
        // A huge declared size is rejected by the cap before any allocation.
        assert!(read_flo(&flo_bytes(FLO_MAGIC, i32::MAX, i32::MAX, &[])).is_err());
    }

    #[test]
    fn sizes() {
        let f = Grid::filled(Shape::new(1, 1), Flow::<f32>::zero()).unwrap();
        assert_eq!(write_flo(&f).len(), 20);
        let f = Grid::filled(Shape::new(2, 3), Flow::<f64>::zero()).unwrap();
        assert_eq!(write_flo(&f).len(), 60);
    }

    #[test]
    fn mask_images() {
        let one = Grid::new(Shape::new(1, 1), vec![true]).unwrap();
        assert_eq!(write_mask_image(&one), b"P5\n1 1\n255\n\xff".to_vec());
        let zero = Grid::new(Shape::new(1, 1), vec![false]).unwrap();
        assert_eq!(write_mask_image(&zero), b"P5\n1 1\n255\n\x00".to_vec());
        let checker = Grid::new(Shape::new(2, 2), vec![true, false, false, true]).unwrap();
        let img = write_mask_image(&checker);
        assert_eq!(&img[img.len() - 4..], &[255, 0, 0, 255]);
        assert_eq!(img.len(), "P5\n2 2\n255\n".len() + 4);
        assert_eq!(read_mask_image(&img).unwrap(), checker);
    }

    #[test]
    fn label_palette() {
        assert_eq!(label_color(0, 3), [0, 0, 0]);
        assert_eq!(label_color(1, 3), [255, 0, 0]);
        assert_eq!(label_color(2, 3), [0, 255, 255]);
        let labels = Grid::new(Shape::new(1, 2), vec![0, 1]).unwrap();
        let img = write_label_image(&labels, 2);
        assert_eq!(&img[..11], b"P6\n2 1\n255\n");
        assert_eq!(&img[11..], &[0, 0, 0, 255, 0, 0]);
    }

    #[test]
    fn visualization_conventions() {
        let zero = Grid::filled(Shape::new(2, 2), Flow::<f64>::zero()).unwrap();
        let img = read_pnm(&write_flow_visualization(&zero)).unwrap();
        assert!(img.pixels.iter().all(|&b| b == 255));

        let uniform = Grid::filled(Shape::new(3, 2), Flow::new(1.0f64, 0.0)).unwrap();
        let img = read_pnm(&write_flow_visualization(&uniform)).unwrap();
        assert!(img.pixels.chunks(3).all(|c| c == [255, 0, 0]));
    }

    #[test]
    fn pnm_header_errors() {
        assert!(read_pnm(b"P4\n1 1\n255\n\x00").is_err());
        assert!(read_pnm(b"P5\n1 1\n15\n\x00").is_err());
        assert!(read_pnm(b"P5\n2 1\n255\n\x00").is_err());
        assert!(read_pnm(b"P5\n# c\n1 1\n255\n\x07").is_ok());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("flowbound-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
