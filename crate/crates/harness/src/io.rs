//! Binary PGM (P5) images, the `FDTT` tensor container, and atomic file writes.
//!
//! Tensor layout, all little-endian:
//!
//! ```text
//! "FDTT" | version: u32 | ndim: u32 | dims: ndim x u32 | payload: f32 x prod(dims)
//! ```
use std::io::Write;
use std::path::Path;

use fddt_core::{Image, Tensor32};

use crate::error::{HarnessError, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"FDTT";
pub const TENSOR_VERSION: u32 = 1;

/// How 8-bit samples map to real values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `v = byte / 255`, covering `[0, 1]`.
    Unit,
    /// `v = 2 * byte / 255 - 1`, covering `[-1, 1]`; used for signed band images.
    Signed,
}

impl PgmEncoding {
    fn decode(self, byte: u8) -> f64 {
        let unit = byte as f64 / 255.0;
        match self {
            PgmEncoding::Unit => unit,
            PgmEncoding::Signed => 2.0 * unit - 1.0,
        }
    }

    fn encode(self, v: f64) -> u8 {
        let unit = match self {
            PgmEncoding::Unit => v,
            PgmEncoding::Signed => (v + 1.0) / 2.0,
        };
        // f64::round rounds half away from zero
        (unit * 255.0).round().clamp(0.0, 255.0) as u8
    }
}

/// Writes through a temporary file in the destination directory, then renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl HeaderCursor<'_> {
    fn fail(&self, msg: impl std::fmt::Display) -> HarnessError {
        HarnessError::format(self.path, format!("byte {}: {msg}", self.pos))
    }

    /// Skips whitespace and `#` comments (which run to the end of the line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let start_sep = self.pos;
        self.skip_separators();
        if self.pos == start_sep {
            return Err(self.fail(format!("expected whitespace before {what}")));
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(self.pos) {
                Some(b) => self.fail(format!("expected {what}, found byte 0x{b:02x}")),
                None => self.fail(format!("header ends before {what}")),
            });
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse()
            .map_err(|_| HarnessError::format(self.path, format!("byte {start}: {what} {text} is out of range")))
    }
}

/// Decodes a P5 file; only 8-bit files with maxval 255 are accepted.
pub fn parse_pgm(bytes: &[u8], path: &Path, encoding: PgmEncoding) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(HarnessError::format(path, "byte 0: missing P5 magic"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2, path };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.fail(format!("image size {width}x{height} is empty")));
    }
    if maxval != 255 {
        return Err(HarnessError::format(
            path,
            format!("byte {maxval_at}: maxval {maxval} is not supported (expected 255)"),
        ));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(b) => return Err(cur.fail(format!("expected one whitespace byte after maxval, found 0x{b:02x}"))),
        None => return Err(cur.fail("header ends before the pixel data")),
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| cur.fail(format!("image size {width}x{height} overflows")))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(cur.fail(format!(
            "truncated payload: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(HarnessError::format(
            path,
            format!(
                "byte {}: {} trailing bytes after the pixel data",
                cur.pos + expected,
                payload.len() - expected
            ),
        ));
    }
    let data = payload.iter().map(|&b| encoding.decode(b)).collect();
    Ok(Image::new(height, width, 1, data)?)
}

/// Canonical P5 bytes of a single-channel image; values outside the encoding's
/// range are clamped.
pub fn encode_pgm(image: &Image, encoding: PgmEncoding) -> Result<Vec<u8>> {
    if image.channels() != 1 {
        return Err(HarnessError::Invalid(format!(
            "PGM holds one channel, image has {}",
            image.channels()
        )));
    }
    image.check_finite()?;
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| encoding.encode(v)));
    Ok(out)
}

pub fn load_pgm(path: &Path) -> Result<Image> {
    load_pgm_with(path, PgmEncoding::Unit)
}

pub fn load_pgm_with(path: &Path, encoding: PgmEncoding) -> Result<Image> {
    parse_pgm(&read(path)?, path, encoding)
}

pub fn save_pgm(path: &Path, image: &Image) -> Result<()> {
    save_pgm_with(path, image, PgmEncoding::Unit)
}

pub fn save_pgm_with(path: &Path, image: &Image, encoding: PgmEncoding) -> Result<()> {
    write_atomic(path, &encode_pgm(image, encoding)?)
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
}

/// Decodes an `FDTT` container.
pub fn parse_tensor(bytes: &[u8], path: &Path) -> Result<Tensor32> {
    let fail = |msg: String| HarnessError::format(path, msg);
    let magic = bytes.get(..4).ok_or_else(|| fail(format!("file has {} bytes, too short for a header", bytes.len())))?;
    if magic != TENSOR_MAGIC {
        return Err(fail(format!(
            "bad magic \"{}\" (expected \"FDTT\")",
            magic.escape_ascii()
        )));
    }
    let version = read_u32(bytes, 4).ok_or_else(|| fail("header ends before the version".into()))?;
    if version != TENSOR_VERSION {
        return Err(fail(format!("unsupported version {version} (expected {TENSOR_VERSION})")));
    }
    let ndim = read_u32(bytes, 8).ok_or_else(|| fail("header ends before ndim".into()))? as usize;
    let header_len = ndim
        .checked_mul(4)
        .and_then(|d| d.checked_add(12))
        .ok_or_else(|| fail(format!("ndim {ndim} is too large")))?;
    if bytes.len() < header_len {
        return Err(fail(format!(
            "header declares {ndim} dims ({header_len} bytes) but the file has {} bytes",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| read_u32(bytes, 12 + 4 * i).expect("length checked") as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[header_len..];
    if payload.len() != expected {
        return Err(fail(format!(
            "payload holds {} bytes but dims {dims:?} need {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
        .collect();
    Ok(Tensor32::new(dims, data)?)
}

pub fn encode_tensor(tensor: &Tensor32) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * tensor.shape().len() + 4 * tensor.numel());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    let ndim = u32::try_from(tensor.shape().len()).map_err(|_| HarnessError::Invalid("too many dims".into()))?;
    out.extend_from_slice(&ndim.to_le_bytes());
    for &d in tensor.shape() {
        let d = u32::try_from(d).map_err(|_| HarnessError::Invalid(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn load_tensor(path: &Path) -> Result<Tensor32> {
    parse_tensor(&read(path)?, path)
}

pub fn save_tensor(path: &Path, tensor: &Tensor32) -> Result<()> {
    write_atomic(path, &encode_tensor(tensor)?)
}

/// Images of one shape stacked as an `N x C x H x W` tensor.
pub fn images_to_tensor(images: &[Image]) -> Result<Tensor32> {
    let cast: Vec<_> = images.iter().map(|i| i.cast::<f32>()).collect();
    Ok(Tensor32::from_images(&cast)?)
}

pub fn tensor_to_images(tensor: &Tensor32) -> Result<Vec<Image>> {
    Ok(tensor.to_images()?.iter().map(|i| i.cast::<f64>()).collect())
}

/// Loads an image by extension: `.pgm` or `.fdtt` (a single `1 x C x H x W` or
/// `H x W` tensor).
pub fn load_image(path: &Path) -> Result<Image> {
    if has_extension(path, "fdtt") {
        let t = load_tensor(path)?;
        let shape = t.shape().to_vec();
        let image = match shape.as_slice() {
            [h, w] => Image::new(*h, *w, 1, t.data().iter().map(|&v| v as f64).collect())?,
            [1, _, _, _] => tensor_to_images(&t)?.remove(0),
            _ => {
                return Err(HarnessError::format(
                    path,
                    format!("expected an H x W or 1 x C x H x W tensor, got dims {shape:?}"),
                ))
            }
        };
        Ok(image)
    } else {
        load_pgm(path)
    }
}

pub fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.pgm")
    }

    #[test]
    fn decodes_linear_map() {
        let bytes = b"P5\n2 2\n255\n\x00\xff\x80\x40";
        let img = parse_pgm(bytes, p(), PgmEncoding::Unit).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!((img.height(), img.width()), (2, 2));
    }

    #[test]
    fn header_comments_and_dimensions() {
        let bytes = b"P5 # made by hand\n3 # width\n1\n255\n\x01\x02\x03";
        let img = parse_pgm(bytes, p(), PgmEncoding::Unit).unwrap();
        assert_eq!((img.height(), img.width()), (1, 3));
    }

    #[test]
    fn malformed_headers_report_positions() {
        let cases: &[(&[u8], &str)] = &[
            (b"P2\n1 1\n255\n\x00", "byte 0"),
            (b"P5\n1 x\n255\n\x00", "byte 5"),
            (b"P5\n2 2\n65535\n\x00", "maxval 65535"),
            (b"P5\n2 2\n255\n\x00\x01", "truncated payload: expected 4 bytes, found 2"),
            (b"P5\n1 1\n255\n\x00\x00", "trailing"),
            (b"P5\n1 1\n255", "header ends"),
            (b"P5\n0 1\n255\n", "empty"),
        ];
        for (bytes, needle) in cases {
            let msg = parse_pgm(bytes, p(), PgmEncoding::Unit).unwrap_err().to_string();
            assert!(msg.contains(needle), "{msg:?} lacks {needle:?}");
            assert!(msg.contains("mem.pgm"), "{msg}");
        }
    }

    #[test]
    fn encode_clamps_and_rounds_half_away() {
        let img = Image::new(1, 5, 1, vec![1.2, -0.3, 0.5, 0.5 / 255.0, 254.5 / 255.0]).unwrap();
        let bytes = encode_pgm(&img, PgmEncoding::Unit).unwrap();
        assert_eq!(&bytes[bytes.len() - 5..], &[255, 0, 128, 1, 255]);
        assert!(encode_pgm(&img.map(|_| f64::NAN), PgmEncoding::Unit).is_err());
    }

    #[test]
    fn every_byte_survives_both_encodings() {
        let payload: Vec<u8> = (0..=255).collect();
        let mut bytes = b"P5\n16 16\n255\n".to_vec();
        bytes.extend(&payload);
        for enc in [PgmEncoding::Unit, PgmEncoding::Signed] {
            let img = parse_pgm(&bytes, p(), enc).unwrap();
            assert_eq!(encode_pgm(&img, enc).unwrap(), bytes);
        }
    }

    #[test]
    fn tensor_round_trip_and_errors() {
        let data: Vec<f32> = (0..60).map(|i| (i as f32 * 0.37).sin() * 1e3).collect();
        let t = Tensor32::new(vec![3, 4, 5], data).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        assert_eq!(bytes.len(), 12 + 12 + 240);
        let back = parse_tensor(&bytes, p()).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(parse_tensor(&bad, p()).unwrap_err().to_string().contains("\"XXXX\""));
        let mut bad = bytes.clone();
        bad[4] = 7;
        assert!(parse_tensor(&bad, p()).unwrap_err().to_string().contains("version 7"));
        assert!(parse_tensor(&bytes[..bytes.len() - 1], p()).is_err());
    }
}
