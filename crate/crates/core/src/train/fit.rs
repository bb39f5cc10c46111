use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::early_stop::{EarlyStopping, EpochVerdict};
use crate::data::{
    apply_affine, make_batch, sample_affine_params, AugmentContext, AugmentationConfig,
    DatasetManifest, PreprocessConfig,
};
use crate::error::{Error, Result};
use crate::model::{model_backward, model_forward, save_weights, Mode, ModelParams, ModelSpec};
use crate::optim::{
    weighted_ce_loss, AdamConfig, AdamState, LossNormalization, WeightedCrossEntropySpec,
};
use crate::rng::{Purpose, StreamKey};
use crate::tensor::Tensor;

/// Anything that can materialise a training batch for given sample indices.
pub trait BatchSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `([N, H, W, C], one-hot [N, 2])` for `indices`, augmented for `epoch`
    /// where the source augments at all.
    fn batch(&self, indices: &[usize], epoch: u64) -> Result<(Tensor<f32>, Tensor<f32>)>;
}

/// Images on disk, decoded and augmented on demand.
pub struct ManifestSource<'a> {
    pub manifest: &'a DatasetManifest,
    pub preprocess: PreprocessConfig,
    pub augmentation: Option<AugmentationConfig>,
    pub seed: u64,
}

impl BatchSource for ManifestSource<'_> {
    fn len(&self) -> usize {
        self.manifest.len()
    }

    fn batch(&self, indices: &[usize], epoch: u64) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let ctx = self.augmentation.as_ref().map(|config| AugmentContext {
            config: config.clone(),
            seed: self.seed,
            epoch,
        });
        make_batch(self.manifest, indices, &self.preprocess, ctx.as_ref())
    }
}

/// Preprocessed images held in memory, `[N, H, W, C]` with labels `0/1`.
pub struct InMemorySource {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub augmentation: Option<AugmentationConfig>,
    pub seed: u64,
}

impl BatchSource for InMemorySource {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn batch(&self, indices: &[usize], epoch: u64) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let (h, w) = (self.images.dims()[1], self.images.dims()[2]);
        let items = indices
            .par_iter()
            .map(|&i| {
                let img = self.images.outer(i)?;
                match &self.augmentation {
                    None => Ok(img),
                    Some(cfg) => {
                        let mut rng =
                            StreamKey::new(self.seed, epoch, i as u64).rng(Purpose::Augment);
                        apply_affine(&img, &sample_affine_params(cfg, h, w, &mut rng))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut onehot = vec![0.0f32; indices.len() * 2];
        for (row, &i) in indices.iter().enumerate() {
            onehot[row * 2 + self.labels[i]] = 1.0;
        }
        Ok((
            Tensor::stack(&items)?,
            Tensor::new(&[indices.len(), 2], onehot)?,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss: WeightedCrossEntropySpec,
    pub adam: AdamConfig,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Where `best.lpnw` and `final.lpnw` go; nothing is written when unset.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            batch_size: 4,
            patience: 5,
            seed: 42,
            loss: WeightedCrossEntropySpec::default(),
            adam: AdamConfig::default(),
            threads: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "max_epochs, batch_size and patience must be positive".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.loss.validate()?;
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights after the last completed epoch.
    pub params: ModelParams<f32>,
    /// Weights of the lowest-loss epoch.
    pub best_params: ModelParams<f32>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
    pub best_checkpoint: Option<PathBuf>,
}

/// Visiting order for one epoch, drawn from the seeded shuffle stream.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut StreamKey::new(seed, epoch, 0).rng(Purpose::Shuffle));
    order
}

/// Minibatch Adam on the weighted loss with early stopping on the epoch's
/// training loss. `on_epoch` sees each epoch's statistics as they complete.
pub fn train(
    spec: &ModelSpec,
    source: &dyn BatchSource,
    init: ModelParams<f32>,
    cfg: &TrainConfig,
    on_epoch: &mut (dyn FnMut(&EpochStats) + Send),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    match cfg.threads {
        None => run(spec, source, init, cfg, on_epoch),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(|| run(spec, source, init, cfg, on_epoch)),
    }
}

fn run(
    spec: &ModelSpec,
    source: &dyn BatchSource,
    init: ModelParams<f32>,
    cfg: &TrainConfig,
    on_epoch: &mut (dyn FnMut(&EpochStats) + Send),
) -> Result<TrainOutcome> {
    let mut params = init;
    let mut adam = AdamState::new(cfg.adam, params.tensors());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let order = epoch_order(source.len(), cfg.seed, epoch as u64);
        let mut weighted = 0.0;
        let mut weight_total = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = source.batch(chunk, epoch as u64)?;
            let keys: Vec<StreamKey> = chunk
                .iter()
                .map(|&i| StreamKey::new(cfg.seed, epoch as u64, i as u64))
                .collect();
            let (probs, cache) = model_forward(&params, spec, &x, Mode::Train, &keys)?;
            let out = weighted_ce_loss(&probs, &y, &cfg.loss)?;
            if !out.weighted_sum.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (samples {chunk:?}); \
                     probabilities {:?}, Adam step {}",
                    probs.data(),
                    adam.t
                )));
            }
            weighted += out.weighted_sum;
            weight_total += out.weight_total;
            correct += probs
                .data()
                .chunks_exact(2)
                .zip(y.data().chunks_exact(2))
                .filter(|(p, t)| (p[1] > p[0]) == (t[1] == 1.0))
                .count();
            let grads = model_backward(&params, spec, &cache, &out.d_logits)?;
            adam.step(&mut params.tensors_mut(), &grads.tensors())?;
        }
        let loss = match cfg.loss.normalization {
            LossNormalization::WeightSum => weighted / weight_total,
            LossNormalization::BatchSize => weighted / source.len() as f64,
        };
        let stats = EpochStats {
            epoch,
            loss,
            accuracy: correct as f64 / source.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        history.push(stats);

        let verdict = stopper.observe(epoch, loss)?;
        if verdict == EpochVerdict::Improved {
            best_params = params.clone();
            if let Some(dir) = &cfg.checkpoint_dir {
                save_weights(&params, dir.join("best.lpnw"))?;
            }
        }
        if verdict == EpochVerdict::Stop {
            stopped_early = true;
            break;
        }
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        save_weights(&params, dir.join("final.lpnw"))?;
    }
    let (best_epoch, best_loss) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        best_checkpoint: cfg.checkpoint_dir.as_ref().map(|d| d.join("best.lpnw")),
        params,
        best_params,
        best_epoch,
        best_loss,
        history,
        stopped_early,
    })
}
