use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
use crate::data::{preprocess_file, DatasetManifest, PreprocessConfig};
use crate::error::{Error, Result};
use crate::model::{model_forward, Mode, ModelParams, ModelSpec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub path: PathBuf,
    /// `[P(NORMAL), P(PNEUMONIA)]`.
    pub probs: [f32; 2],
    /// Index of the larger probability; ties go to NORMAL.
    pub class: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub predictions: Vec<(Prediction, usize)>,
    /// Files that could not be decoded, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

fn argmax2(p: [f32; 2]) -> usize {
    usize::from(p[1] > p[0])
}

/// Inference on already-preprocessed `[H, W, C]` images.
pub fn predict_tensors(
    params: &ModelParams<f32>,
    spec: &ModelSpec,
    images: &[Tensor<f32>],
) -> Result<Vec<[f32; 2]>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let (probs, _) = model_forward(params, spec, &Tensor::stack(images)?, Mode::Infer, &[])?;
    Ok(probs.data().chunks_exact(2).map(|p| [p[0], p[1]]).collect())
}

/// Classifies individual files; each entry fails independently.
pub fn predict_files(
    params: &ModelParams<f32>,
    spec: &ModelSpec,
    paths: &[PathBuf],
    pre: &PreprocessConfig,
) -> Vec<Result<Prediction>> {
    paths
        .par_iter()
        .map(|path| {
            let img = preprocess_file(path, pre)?;
            let probs = predict_tensors(params, spec, std::slice::from_ref(&img))?[0];
            Ok(Prediction {
                path: path.clone(),
                probs,
                class: argmax2(probs),
            })
        })
        .collect()
}

/// Runs inference over a labelled split. Undecodable files are skipped and
/// listed in `failures`; it is an error only if nothing could be classified.
pub fn evaluate(
    params: &ModelParams<f32>,
    spec: &ModelSpec,
    manifest: &DatasetManifest,
    pre: &PreprocessConfig,
    batch_size: usize,
) -> Result<EvalReport> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut predictions = Vec::with_capacity(manifest.len());
    let mut failures = Vec::new();
    let mut confusion = ConfusionMatrix::default();
    for chunk in manifest.records.chunks(batch_size) {
        let loaded: Vec<(&Path, usize, Result<Tensor<f32>>)> = chunk
            .par_iter()
            .map(|r| (r.path.as_path(), r.label, preprocess_file(&r.path, pre)))
            .collect();
        let mut ok = Vec::new();
        let mut images = Vec::new();
        for (path, label, img) in loaded {
            match img {
                Ok(t) => {
                    ok.push((path, label));
                    images.push(t);
                }
                Err(e) => failures.push((path.to_path_buf(), e.to_string())),
            }
        }
        for ((path, label), probs) in ok.into_iter().zip(predict_tensors(params, spec, &images)?) {
            let class = argmax2(probs);
            confusion.record(label, class);
            predictions.push((
                Prediction {
                    path: path.to_path_buf(),
                    probs,
                    class,
                },
                label,
            ));
        }
    }
    if predictions.is_empty() {
        return Err(Error::Input(format!(
            "no image in the {} split could be classified ({} failures)",
            manifest.split,
            failures.len()
        )));
    }
    let metrics = metrics_from_confusion(&confusion)?;
    Ok(EvalReport {
        confusion,
        metrics,
        predictions,
        failures,
    })
}
