use std::fs;
use std::path::Path;

use crate::error::{DecodeError, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Jpeg,
    Png,
    Pgm,
}

impl ImageFormat {
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        match bytes {
            [0xFF, 0xD8, 0xFF, ..] => Some(ImageFormat::Jpeg),
            [0x89, b'P', b'N', b'G', ..] => Some(ImageFormat::Png),
            [b'P', b'5', ..] => Some(ImageFormat::Pgm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ImageFormat::Jpeg => "JPEG",
            ImageFormat::Png => "PNG",
            ImageFormat::Pgm => "PGM",
        }
    }
}

/// Reads an image file into an `[H, W, C]` tensor of integer values 0..=255,
/// `C` being 1 for grayscale sources and 3 otherwise.
pub fn decode_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bytes(&bytes, path)
}

pub fn decode_bytes(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let fail = |format: &str, reason: String| -> Error {
        DecodeError {
            path: path.to_path_buf(),
            format: format.to_string(),
            reason,
        }
        .into()
    };
    match ImageFormat::sniff(bytes) {
        Some(ImageFormat::Pgm) => decode_pgm(bytes).map_err(|r| fail("PGM", r)),
        Some(fmt @ (ImageFormat::Jpeg | ImageFormat::Png)) => {
            let codec = match fmt {
                ImageFormat::Jpeg => image::ImageFormat::Jpeg,
                _ => image::ImageFormat::Png,
            };
            let img = image::load_from_memory_with_format(bytes, codec)
                .map_err(|e| fail(fmt.name(), e.to_string()))?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            let (channels, raw) = if img.color().has_color() {
                (3, img.to_rgb8().into_raw())
            } else {
                (1, img.to_luma8().into_raw())
            };
            Tensor::new(&[h, w, channels], raw.into_iter().map(f32::from).collect())
                .map_err(|e| fail(fmt.name(), e.to_string()))
        }
        None => Err(fail(
            "unknown",
            "not a JPEG, PNG or binary PGM (P5) file".into(),
        )),
    }
}

/// Binary PGM (`P5`) with maxval ≤ 255. Header tokens may be separated by
/// any whitespace and interleaved with `#` comments.
fn decode_pgm(bytes: &[u8]) -> Result<Tensor<f32>, String> {
    let mut pos = 2;
    let mut next_token = || -> Result<usize, String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("header ended early".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad header token at byte {start}"))
    };
    let width = next_token()?;
    let height = next_token()?;
    let maxval = next_token()?;
    if width == 0 || height == 0 {
        return Err(format!("invalid size {width}x{height}"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let n = width * height;
    let raster = bytes.get(start..start + n).ok_or_else(|| {
        format!(
            "raster needs {n} bytes, file has {}",
            bytes.len().saturating_sub(start)
        )
    })?;
    let scale = 255.0 / maxval as f32;
    let data = raster
        .iter()
        .map(|&v| {
            if maxval == 255 {
                v as f32
            } else {
                (v as f32 * scale).round()
            }
        })
        .collect();
    Tensor::new(&[height, width, 1], data).map_err(|e| e.to_string())
}
