//! Binary netpbm: P6 images (maxval 255) and P5 masks.

use std::fs;
use std::path::{Path, PathBuf};

use opfactor_core::vision::{MaskedImage, Rgb, VisionError};

#[derive(Debug, thiserror::Error)]
pub enum PnmError {
    #[error("malformed netpbm data: {0}")]
    Malformed(String),
    #[error("mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    DimensionMismatch {
        img_w: usize,
        img_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error("mask marks no foreground pixels")]
    EmptyForeground,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Vision(VisionError),
}

impl From<VisionError> for PnmError {
    fn from(e: VisionError) -> Self {
        match e {
            VisionError::EmptyForeground => PnmError::EmptyForeground,
            other => PnmError::Vision(other),
        }
    }
}

fn malformed(msg: impl Into<String>) -> PnmError {
    PnmError::Malformed(msg.into())
}

struct Header {
    width: usize,
    height: usize,
    maxval: u16,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header, PnmError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(malformed(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and # comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header field out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed("missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed("zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(malformed(format!("unsupported maxval {maxval}")));
    }
    Ok(Header {
        width,
        height,
        maxval: maxval as u16,
        data_offset: pos + 1,
    })
}

fn payload<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8], PnmError> {
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| malformed("dimensions overflow"))?;
    bytes
        .get(h.data_offset..h.data_offset + need)
        .ok_or_else(|| malformed(format!("expected {need} bytes of pixel data")))
}

/// Parses a P6 image with maxval 255.
pub fn read_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<Rgb>), PnmError> {
    let h = parse_header(bytes, b"P6")?;
    if h.maxval != 255 {
        return Err(malformed(format!("P6 maxval must be 255, got {}", h.maxval)));
    }
    let data = payload(bytes, &h, 3)?;
    let pixels = data.chunks_exact(3).map(|c| Rgb([c[0], c[1], c[2]])).collect();
    Ok((h.width, h.height, pixels))
}

/// Parses a P5 graymap (maxval up to 255).
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), PnmError> {
    let h = parse_header(bytes, b"P5")?;
    let data = payload(bytes, &h, 1)?;
    Ok((h.width, h.height, data.to_vec()))
}

pub fn write_ppm(width: usize, height: usize, pixels: &[Rgb]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().flat_map(|p| p.0));
    out
}

pub fn write_pgm(width: usize, height: usize, levels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(levels);
    out
}

/// Builds a masked image from P6 bytes and optional P5 mask bytes
/// (value > 0 is foreground; no mask means every pixel is foreground).
pub fn load_image_bytes(image: &[u8], mask: Option<&[u8]>) -> Result<MaskedImage, PnmError> {
    let (w, h, pixels) = read_ppm(image)?;
    let mask = match mask {
        Some(bytes) => {
            let (mw, mh, levels) = read_pgm(bytes)?;
            if (mw, mh) != (w, h) {
                return Err(PnmError::DimensionMismatch {
                    img_w: w,
                    img_h: h,
                    mask_w: mw,
                    mask_h: mh,
                });
            }
            Some(levels.into_iter().map(|v| v > 0).collect())
        }
        None => None,
    };
    Ok(MaskedImage::new(w, h, pixels, mask)?)
}

/// `<dir>/<stem>.mask.pgm` beside `image`.
pub fn mask_sidecar(image: &Path) -> PathBuf {
    let stem = image.file_stem().unwrap_or_default().to_string_lossy();
    image.with_file_name(format!("{stem}.mask.pgm"))
}

fn read(path: &Path) -> Result<Vec<u8>, PnmError> {
    fs::read(path).map_err(|source| PnmError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an image and its mask: the explicit `mask` path if given, else the
/// sidecar if it exists, else no mask.
pub fn load_image(image: &Path, mask: Option<&Path>) -> Result<MaskedImage, PnmError> {
    let img = read(image)?;
    let mask_bytes = match mask {
        Some(p) => Some(read(p)?),
        None => {
            let side = mask_sidecar(image);
            if side.is_file() {
                Some(read(&side)?)
            } else {
                None
            }
        }
    };
    load_image_bytes(&img, mask_bytes.as_deref())
}

/// Writes the image and, when any pixel is background, its sidecar mask.
pub fn save_image(img: &MaskedImage, path: &Path) -> std::io::Result<()> {
    fs::write(path, write_ppm(img.width(), img.height(), img.pixels()))?;
    if img.mask().iter().any(|&m| !m) {
        let levels: Vec<u8> = img.mask().iter().map(|&m| if m { 255 } else { 0 }).collect();
        fs::write(mask_sidecar(path), write_pgm(img.width(), img.height(), &levels))?;
    }
    Ok(())
}
