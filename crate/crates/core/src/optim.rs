//! Class-weighted categorical cross-entropy and the Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// How the weighted per-sample losses of a batch are reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// `Σ w_n l_n / Σ w_n`
    #[default]
    WeightSum,
    /// `Σ w_n l_n / N`
    BatchSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCrossEntropySpec {
    pub class_weights: Vec<f64>,
    pub normalization: LossNormalization,
}

impl Default for WeightedCrossEntropySpec {
    /// NORMAL weighted 2.0, PNEUMONIA 1.2.
    fn default() -> Self {
        WeightedCrossEntropySpec {
            class_weights: vec![2.0, 1.2],
            normalization: LossNormalization::WeightSum,
        }
    }
}

impl WeightedCrossEntropySpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_weights.is_empty() {
            return Err(Error::Config("class_weights is empty".into()));
        }
        if let Some(w) = self
            .class_weights
            .iter()
            .find(|w| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Config(format!("class weight {w} must be > 0")));
        }
        Ok(())
    }
}

pub const LOG_CLAMP: f64 = 1e-12;

/// Loss and its gradient with respect to the pre-softmax logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T: Real> {
    pub loss: T,
    pub d_logits: Tensor<T>,
    /// Σ w_n l_n before normalization, for epoch-level aggregation.
    pub weighted_sum: f64,
    /// Σ w_n over the batch.
    pub weight_total: f64,
}

fn target_class<T: Real>(row: &[T], n: usize) -> Result<usize> {
    let mut class = None;
    for (k, &v) in row.iter().enumerate() {
        if v == T::one() {
            if class.is_some() {
                return Err(Error::Input(format!("target row {n} has several ones")));
            }
            class = Some(k);
        } else if v != T::zero() {
            return Err(Error::Input(format!("target row {n} is not one-hot")));
        }
    }
    class.ok_or_else(|| Error::Input(format!("target row {n} has no positive class")))
}

/// `l_n = -ln(max(p[n, y_n], 1e-12))`, `w_n = class_weights[y_n]`,
/// `loss = Σ w_n l_n / Σ w_n` (or `/ N`), with the fused softmax gradient
/// `d_logits[n] = w_n (p[n] - t[n]) / Σ w_n`.
pub fn weighted_ce_loss<T: Real>(
    probs: &Tensor<T>,
    targets: &Tensor<T>,
    spec: &WeightedCrossEntropySpec,
) -> Result<LossOutput<T>> {
    spec.validate()?;
    if probs.rank() != 2 {
        return Err(Error::shape(format!(
            "probs must be [N,K], got {:?}",
            probs.dims()
        )));
    }
    targets.expect_dims(probs.dims(), "targets")?;
    let (n, k) = (probs.dims()[0], probs.dims()[1]);
    if k > spec.class_weights.len() {
        return Err(Error::Config(format!(
            "{k} classes but only {} class weights",
            spec.class_weights.len()
        )));
    }

    let mut weights = Vec::with_capacity(n);
    let mut weighted_sum = 0.0;
    for (i, (p, t)) in probs
        .data()
        .chunks_exact(k)
        .zip(targets.data().chunks_exact(k))
        .enumerate()
    {
        let row_sum: f64 = p.iter().map(|v| v.as_f64()).sum();
        if !row_sum.is_finite() || (row_sum - 1.0).abs() > 1e-5 {
            return Err(Error::Input(format!(
                "probability row {i} sums to {row_sum}, not 1"
            )));
        }
        let y = target_class(t, i)?;
        let w = spec.class_weights[y];
        let l = -p[y].as_f64().max(LOG_CLAMP).ln();
        weights.push(w);
        weighted_sum += w * l;
    }
    let weight_total: f64 = weights.iter().sum();
    let denom = match spec.normalization {
        LossNormalization::WeightSum => weight_total,
        LossNormalization::BatchSize => n as f64,
    };

    let mut d = Vec::with_capacity(n * k);
    for ((p, t), &w) in probs
        .data()
        .chunks_exact(k)
        .zip(targets.data().chunks_exact(k))
        .zip(&weights)
    {
        let s = T::from_f64_lossy(w / denom);
        d.extend(p.iter().zip(t).map(|(&pv, &tv)| s * (pv - tv)));
    }
    Ok(LossOutput {
        loss: T::from_f64_lossy(weighted_sum / denom),
        d_logits: Tensor::new(probs.dims(), d)?,
        weighted_sum,
        weight_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecayMode {
    /// `θ ← θ·(1 − lr·λ)` after the adaptive step.
    #[default]
    Decoupled,
    /// `g ← g + λθ` before the moment updates.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub decay_mode: WeightDecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            weight_decay: 1e-5,
            decay_mode: WeightDecayMode::Decoupled,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0
            && [self.lr, self.epsilon, self.weight_decay]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First/second moment estimates for every parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| p.map(|_| T::zero())).collect();
        AdamState {
            config,
            v: m.clone(),
            m,
            t: 0,
        }
    }

    /// One Adam update over all parameters. Nothing is modified if any
    /// gradient is malformed or non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "Adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            g.expect_dims(p.dims(), "gradient")?;
            p.expect_dims(self.m[i].dims(), "parameter")?;
            if !g.all_finite() {
                return Err(Error::Numeric(format!("gradient {i} is not finite")));
            }
        }

        let c = self.config;
        self.t += 1;
        let t = self.t as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.epsilon);
        let lambda = T::from_f64_lossy(c.weight_decay);
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let shrink = T::from_f64_lossy(1.0 - c.lr * c.weight_decay);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for (((theta, &g0), mv), vv) in pd
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let g = match c.decay_mode {
                    WeightDecayMode::L2 => g0 + lambda * *theta,
                    WeightDecayMode::Decoupled => g0,
                };
                *mv = b1 * *mv + (one - b1) * g;
                *vv = b2 * *vv + (one - b2) * g * g;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
                if c.decay_mode == WeightDecayMode::Decoupled {
                    *theta = *theta * shrink;
                }
            }
        }
        Ok(())
    }
}
