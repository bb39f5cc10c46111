//! Dataset discovery, image decoding, preprocessing and augmentation.
//!
//! Per-image pipeline: decode → grayscale → bilinear resize → (train only)
//! random affine with nearest fill → rescale to [0, 1] → `[H, W, 1]`.

mod augment;
mod batch;
mod decode;
mod manifest;
mod preprocess;

pub use augment::{
    apply_affine, sample_affine_params, AffineParams, AugmentationConfig, FillMode, ShearUnit,
};
pub use batch::{make_batch, preprocess_file, AugmentContext};
pub use decode::{decode_bytes, decode_image, ImageFormat};
pub use manifest::{load_manifest, DatasetManifest, ImageRecord, Split, CLASS_NAMES};
pub use preprocess::{rescale, resize_bilinear, to_grayscale, PreprocessConfig};
