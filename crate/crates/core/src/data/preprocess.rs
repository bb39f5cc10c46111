use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// `[height, width]` fed to the network.
    pub target_size: [usize; 2],
    pub rescale: f64,
    /// BT.601 luma weights for R, G, B.
    pub luma_weights: [f64; 3],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: [224, 224],
            rescale: 1.0 / 255.0,
            luma_weights: [0.299, 0.587, 0.114],
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_size.contains(&0) {
            return Err(Error::Config("target_size must be positive".into()));
        }
        if !(self.rescale > 0.0 && self.rescale.is_finite()) {
            return Err(Error::Config(format!("invalid rescale {}", self.rescale)));
        }
        Ok(())
    }
}

/// `y = wR·R + wG·G + wB·B`; single-channel input passes through unchanged.
pub fn to_grayscale(img: &Tensor<f32>, weights: [f64; 3]) -> Result<Tensor<f32>> {
    if img.rank() != 3 {
        return Err(Error::shape(format!(
            "grayscale expects [H,W,C], got {:?}",
            img.dims()
        )));
    }
    let (h, w, c) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    match c {
        1 => Ok(img.clone()),
        3 => {
            let data = img
                .data()
                .chunks_exact(3)
                .map(|px| {
                    (weights[0] * px[0] as f64
                        + weights[1] * px[1] as f64
                        + weights[2] * px[2] as f64) as f32
                })
                .collect();
            Tensor::new(&[h, w, 1], data)
        }
        _ => Err(Error::shape(format!(
            "grayscale expects 1 or 3 channels, got {c}"
        ))),
    }
}

/// Bilinear resampling with half-pixel centres: the source coordinate of
/// destination index `d` is `(d + 0.5)·(in/out) − 0.5`, clamped to the image.
pub fn resize_bilinear(img: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    if img.rank() != 3 || out_h == 0 || out_w == 0 {
        return Err(Error::shape(format!(
            "cannot resize {:?} to {out_h}x{out_w}",
            img.dims()
        )));
    }
    let (h, w, c) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let rows = taps(h, out_h);
    let cols = taps(w, out_w);
    let src = img.data();
    let px = |y: usize, x: usize, ch: usize| src[(y * w + x) * c + ch] as f64;
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let top = px(y0, x0, ch) * (1.0 - fx) + px(y0, x1, ch) * fx;
                let bottom = px(y1, x0, ch) * (1.0 - fx) + px(y1, x1, ch) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    Tensor::new(&[out_h, out_w, c], out)
}

/// Multiplies every pixel by `factor` (1/255 maps 0..=255 onto [0, 1]).
pub fn rescale(img: &Tensor<f32>, factor: f64) -> Tensor<f32> {
    img.map(|v| (v as f64 * factor) as f32)
}
