use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShearUnit {
    #[default]
    Degrees,
    Radians,
}

/// Out-of-image samples copy the nearest edge pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    #[default]
    Nearest,
}

/// Ranges for random geometric augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    /// Maximum absolute rotation, degrees.
    pub rotation_range: f64,
    /// Zoom factors are drawn from `[1 − z, 1 + z]` per axis.
    pub zoom_range: f64,
    /// Fraction of the image width.
    pub width_shift: f64,
    /// Fraction of the image height.
    pub height_shift: f64,
    pub shear_range: f64,
    pub shear_unit: ShearUnit,
    pub fill_mode: FillMode,
    pub horizontal_flip: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            rotation_range: 12.0,
            zoom_range: 0.15,
            width_shift: 0.15,
            height_shift: 0.15,
            shear_range: 0.15,
            shear_unit: ShearUnit::Degrees,
            fill_mode: FillMode::Nearest,
            horizontal_flip: false,
        }
    }
}

impl AugmentationConfig {
    /// No-op ranges.
    pub fn identity() -> Self {
        AugmentationConfig {
            rotation_range: 0.0,
            zoom_range: 0.0,
            width_shift: 0.0,
            height_shift: 0.0,
            shear_range: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("rotation_range", self.rotation_range),
            ("zoom_range", self.zoom_range),
            ("width_shift", self.width_shift),
            ("height_shift", self.height_shift),
            ("shear_range", self.shear_range),
        ];
        for (name, v) in ranges {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.zoom_range >= 1.0 {
            return Err(Error::Config("zoom_range must be < 1".into()));
        }
        if self.horizontal_flip {
            return Err(Error::Config("horizontal_flip is not supported".into()));
        }
        Ok(())
    }
}

/// One concrete transform. Angles in degrees, shifts in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub theta: f64,
    pub zx: f64,
    pub zy: f64,
    pub tx: f64,
    pub ty: f64,
    pub shear: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        theta: 0.0,
        zx: 1.0,
        zy: 1.0,
        tx: 0.0,
        ty: 0.0,
        shear: 0.0,
    };
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.gen_range(-half_width..=half_width)
    }
}

/// Draws `theta, zx, zy, tx, ty, shear` in that order from `rng`.
pub fn sample_affine_params<R: Rng + ?Sized>(
    cfg: &AugmentationConfig,
    height: usize,
    width: usize,
    rng: &mut R,
) -> AffineParams {
    let theta = symmetric(rng, cfg.rotation_range);
    let zx = 1.0 + symmetric(rng, cfg.zoom_range);
    let zy = 1.0 + symmetric(rng, cfg.zoom_range);
    let tx = symmetric(rng, cfg.width_shift) * width as f64;
    let ty = symmetric(rng, cfg.height_shift) * height as f64;
    let shear = match cfg.shear_unit {
        ShearUnit::Degrees => symmetric(rng, cfg.shear_range),
        ShearUnit::Radians => symmetric(rng, cfg.shear_range).to_degrees(),
    };
    AffineParams {
        theta,
        zx,
        zy,
        tx,
        ty,
        shear,
    }
}

/// Warps an `[H, W, C]` image. The forward map is
/// `dst = R(θ)·S(shear)·Z(zx, zy)·(src − centre) + centre + (tx, ty)` in
/// (column, row) coordinates; each output pixel takes the nearest source pixel
/// of the inverse-mapped coordinate, clamped to the image border.
pub fn apply_affine(img: &Tensor<f32>, p: &AffineParams) -> Result<Tensor<f32>> {
    if img.rank() != 3 {
        return Err(Error::shape(format!(
            "affine expects [H,W,C], got {:?}",
            img.dims()
        )));
    }
    let (h, w, c) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    let (st, ct) = p.theta.to_radians().sin_cos();
    let (ss, cs) = p.shear.to_radians().sin_cos();
    // R · S · Z
    let rs = [[ct, -ct * ss - st * cs], [st, -st * ss + ct * cs]];
    let a = [
        [rs[0][0] * p.zx, rs[0][1] * p.zy],
        [rs[1][0] * p.zx, rs[1][1] * p.zy],
    ];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::Numeric(format!("singular affine transform {p:?}")));
    }
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - p.tx;
            let dy = y as f64 - cy - p.ty;
            let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
            let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
            let col = sx.round().clamp(0.0, (w - 1) as f64) as usize;
            let row = sy.round().clamp(0.0, (h - 1) as f64) as usize;
            let base = (row * w + col) * c;
            out.extend_from_slice(&src[base..base + c]);
        }
    }
    Tensor::new(&[h, w, c], out)
}
