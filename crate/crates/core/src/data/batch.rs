use std::path::Path;

use rayon::prelude::*;

use super::augment::{apply_affine, sample_affine_params, AugmentationConfig};
use super::decode::decode_image;
use super::manifest::DatasetManifest;
use super::preprocess::{rescale, resize_bilinear, to_grayscale, PreprocessConfig};
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::tensor::Tensor;

/// Keys the augmentation stream of each sample by `(seed, epoch, record index)`.
#[derive(Debug, Clone)]
pub struct AugmentContext {
    pub config: AugmentationConfig,
    pub seed: u64,
    pub epoch: u64,
}

fn prepare(
    path: &Path,
    pre: &PreprocessConfig,
    augment: Option<(&AugmentationConfig, StreamKey)>,
) -> Result<Tensor<f32>> {
    let [h, w] = pre.target_size;
    let img = decode_image(path)?;
    let gray = to_grayscale(&img, pre.luma_weights)?;
    let mut resized = resize_bilinear(&gray, h, w)?;
    if let Some((cfg, key)) = augment {
        let params = sample_affine_params(cfg, h, w, &mut key.rng(Purpose::Augment));
        resized = apply_affine(&resized, &params)?;
    }
    Ok(rescale(&resized, pre.rescale))
}

/// Runs the inference pipeline on one file, producing `[H, W, 1]` in [0, 1].
pub fn preprocess_file(path: impl AsRef<Path>, pre: &PreprocessConfig) -> Result<Tensor<f32>> {
    prepare(path.as_ref(), pre, None)
}

/// Loads `indices` of `manifest` as an `[N, H, W, 1]` batch plus `[N, 2]`
/// one-hot labels. Images are decoded in parallel; output order follows
/// `indices`.
pub fn make_batch(
    manifest: &DatasetManifest,
    indices: &[usize],
    pre: &PreprocessConfig,
    augment: Option<&AugmentContext>,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if indices.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let images = indices
        .par_iter()
        .map(|&i| {
            let record = manifest.records.get(i).ok_or_else(|| {
                Error::Input(format!("record {i} out of range ({})", manifest.len()))
            })?;
            let aug = augment.map(|a| (&a.config, StreamKey::new(a.seed, a.epoch, i as u64)));
            prepare(&record.path, pre, aug)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut labels = vec![0.0f32; indices.len() * 2];
    for (row, &i) in indices.iter().enumerate() {
        labels[row * 2 + manifest.records[i].label] = 1.0;
    }
    Ok((
        Tensor::stack(&images)?,
        Tensor::new(&[indices.len(), 2], labels)?,
    ))
}
