use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: DropoutMode,
}

impl DropoutSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.rate
            )));
        }
        Ok(())
    }
}

/// Keep/drop decision per element plus the inverted-dropout scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

/// Inverted dropout: in training each element survives with probability
/// `1 - rate` and is scaled by `1 / (1 - rate)`. Inference is the identity.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    spec: DropoutSpec,
    rng: &mut R,
) -> Result<(Tensor<T>, DropoutMask)> {
    spec.validate()?;
    if spec.mode == DropoutMode::Infer || spec.rate == 0.0 {
        return Ok((
            x.clone(),
            DropoutMask {
                keep: vec![true; x.len()],
                scale: 1.0,
            },
        ));
    }
    let keep_prob = 1.0 - spec.rate;
    let keep: Vec<bool> = (0..x.len()).map(|_| rng.gen::<f64>() < keep_prob).collect();
    let mask = DropoutMask {
        keep,
        scale: 1.0 / keep_prob,
    };
    let y = apply(&mask, x)?;
    Ok((y, mask))
}

pub fn dropout_backward<T: Real>(mask: &DropoutMask, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    apply(mask, d_out)
}

fn apply<T: Real>(mask: &DropoutMask, x: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.keep.len() != x.len() {
        return Err(Error::shape(format!(
            "dropout mask has {} entries, tensor has {}",
            mask.keep.len(),
            x.len()
        )));
    }
    let scale = T::from_f64_lossy(mask.scale);
    let data = x
        .data()
        .iter()
        .zip(&mask.keep)
        .map(|(&v, &k)| if k { v * scale } else { T::zero() })
        .collect();
    Tensor::new(x.dims(), data)
}
