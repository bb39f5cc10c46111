use std::fs;
use std::path::{Path, PathBuf};

use lpn_core::data::{AugmentationConfig, PreprocessConfig};
use lpn_core::model::Architecture;
use lpn_core::optim::{AdamConfig, LossNormalization, WeightDecayMode, WeightedCrossEntropySpec};
use lpn_core::train::TrainConfig;
use lpn_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run needs. Every field has a default, so `{}` is a complete
/// configuration for the reference experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory holding `train/`, `test/` and `val/` class folders.
    pub dataset_root: PathBuf,
    pub out_dir: PathBuf,
    pub architecture: Architecture,
    pub seed: u64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// `[NORMAL, PNEUMONIA]`.
    pub class_weights: [f64; 2],
    pub loss_normalization: LossNormalization,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecayMode,
    /// Apply random affine augmentation to training images.
    pub augment: bool,
    pub augmentation: AugmentationConfig,
    pub preprocess: PreprocessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        RunConfig {
            dataset_root: PathBuf::from("data/chest_xray"),
            out_dir: PathBuf::from("runs/default"),
            architecture: Architecture::LightPneumoNet,
            seed: 42,
            max_epochs: 100,
            batch_size: 4,
            patience: 5,
            class_weights: [2.0, 1.2],
            loss_normalization: LossNormalization::WeightSum,
            learning_rate: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            weight_decay: adam.weight_decay,
            weight_decay_mode: adam.decay_mode,
            augment: true,
            augmentation: AugmentationConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.augmentation.validate()?;
        self.preprocess.validate()?;
        let [h, w, _] = self.architecture.spec().input;
        if self.preprocess.target_size != [h, w] {
            return Err(Error::Config(format!(
                "preprocess.target_size {:?} does not match the {} input {h}x{w}",
                self.preprocess.target_size, self.architecture
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
            decay_mode: self.weight_decay_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            seed: self.seed,
            loss: WeightedCrossEntropySpec {
                class_weights: self.class_weights.to_vec(),
                normalization: self.loss_normalization,
            },
            adam: self.adam(),
            threads: None,
            checkpoint_dir: Some(self.out_dir.clone()),
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.patience, 5);
        assert_eq!(cfg.class_weights, [2.0, 1.2]);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_pretty_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_name_the_key() {
        let err = RunConfig::from_json(r#"{"learning_rat": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rat"), "{err}");
        let err = RunConfig::from_json(r#"{"augmentation": {"rotation": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("rotation"), "{err}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for bad in [
            r#"{"batch_size": 0}"#,
            r#"{"patience": 0}"#,
            r#"{"learning_rate": -1}"#,
            r#"{"architecture": "reduced"}"#,
            r#"{"augmentation": {"horizontal_flip": true}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
        let ok = r#"{"architecture": "reduced", "preprocess": {"target_size": [20, 20]}}"#;
        assert!(RunConfig::from_json(ok).is_ok());
    }
}
