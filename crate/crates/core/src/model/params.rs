use rand::distributions::{Distribution, Uniform};

use super::spec::{shape_trace, LayerSpec, ModelSpec};
use crate::error::{CheckpointError, Error, Result};
use crate::ops::{ConvLayer, DenseLayer};
use crate::rng::{Purpose, StreamKey};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind<T: Real> {
    Conv(ConvLayer<T>),
    Dense(DenseLayer<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayer<T: Real> {
    pub name: String,
    pub kind: ParamKind<T>,
}

impl<T: Real> ParamLayer<T> {
    fn tensor_names(&self) -> [String; 2] {
        match self.kind {
            ParamKind::Conv(_) => [
                format!("{}.kernel", self.name),
                format!("{}.bias", self.name),
            ],
            ParamKind::Dense(_) => [
                format!("{}.weights", self.name),
                format!("{}.bias", self.name),
            ],
        }
    }

    fn tensors(&self) -> [&Tensor<T>; 2] {
        match &self.kind {
            ParamKind::Conv(l) => [&l.kernel, &l.bias],
            ParamKind::Dense(l) => [&l.weights, &l.bias],
        }
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 2] {
        match &mut self.kind {
            ParamKind::Conv(l) => [&mut l.kernel, &mut l.bias],
            ParamKind::Dense(l) => [&mut l.weights, &mut l.bias],
        }
    }
}

/// Trainable tensors of a [`ModelSpec`], one [`ParamLayer`] per conv/dense
/// layer in stack order. Also used as the container for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real> {
    pub layers: Vec<ParamLayer<T>>,
}

/// `(name, is_conv, weight dims, bias length)`.
type LayerLayout = (String, bool, Vec<usize>, usize);

/// Weight layout of every parametrised layer, in order.
fn layout(spec: &ModelSpec) -> Result<Vec<LayerLayout>> {
    let trace = shape_trace(spec)?;
    let mut prev = spec.input.to_vec();
    let mut out = Vec::new();
    for (layer, entry) in spec.layers.iter().zip(&trace.entries) {
        match layer {
            LayerSpec::Conv {
                name,
                filters,
                kernel,
            } => out.push((
                name.clone(),
                true,
                vec![*kernel, *kernel, prev[2], *filters],
                *filters,
            )),
            LayerSpec::Dense { name, units, .. } => {
                out.push((name.clone(), false, vec![prev[0], *units], *units))
            }
            _ => {}
        }
        prev = entry.output.clone();
    }
    Ok(out)
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters (or gradient accumulator) for `spec`.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let layers = layout(spec)?
            .into_iter()
            .map(|(name, is_conv, kdims, n)| {
                let k = Tensor::zeros(&kdims)?;
                let b = Tensor::zeros(&[n])?;
                let kind = if is_conv {
                    ParamKind::Conv(ConvLayer::new(k, b)?)
                } else {
                    ParamKind::Dense(DenseLayer::new(k, b)?)
                };
                Ok(ParamLayer { name, kind })
            })
            .collect::<Result<_>>()?;
        Ok(ModelParams { layers })
    }

    pub fn layer(&self, name: &str) -> Option<&ParamLayer<T>> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// `(tensor name, tensor)` pairs in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|l| l.tensor_names().into_iter().zip(l.tensors()))
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| ParamLayer {
                    name: l.name.clone(),
                    kind: match &l.kind {
                        ParamKind::Conv(c) => ParamKind::Conv(ConvLayer {
                            kernel: c.kernel.cast(),
                            bias: c.bias.cast(),
                        }),
                        ParamKind::Dense(d) => ParamKind::Dense(DenseLayer {
                            weights: d.weights.cast(),
                            bias: d.bias.cast(),
                        }),
                    },
                })
                .collect(),
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &ModelParams<T>) -> Result<()> {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::shape("gradient layouts differ"));
        }
        for (a, b) in mine.into_iter().zip(theirs) {
            b.expect_dims(a.dims(), "gradient accumulate")?;
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = *x + y;
            }
        }
        Ok(())
    }

    /// Rebuilds parameters for `spec` from named tensors, checking that names,
    /// order and shapes match exactly.
    pub fn from_named(spec: &ModelSpec, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        let expected: Vec<(String, Vec<usize>)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.dims().to_vec()))
            .collect();
        if expected.len() != tensors.len() {
            return Err(CheckpointError::LayoutMismatch(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            ))
            .into());
        }
        for ((exp_name, exp_dims), (name, t)) in expected.iter().zip(&tensors) {
            if exp_name != name {
                return Err(CheckpointError::LayoutMismatch(format!(
                    "expected tensor {exp_name}, found {name}"
                ))
                .into());
            }
            if exp_dims.as_slice() != t.dims() {
                return Err(CheckpointError::LayoutMismatch(format!(
                    "{name}: expected shape {exp_dims:?}, found {:?}",
                    t.dims()
                ))
                .into());
            }
        }
        for (slot, (_, t)) in params.tensors_mut().into_iter().zip(tensors) {
            *slot = t;
        }
        Ok(params)
    }
}

/// Glorot-uniform weights, `L = √(6/(fan_in + fan_out))` with conv fans
/// `kh·kw·cin` / `kh·kw·cout`, and zero biases. Fully determined by `seed`.
pub fn init_params<T: Real>(spec: &ModelSpec, seed: u64) -> Result<ModelParams<T>> {
    let mut params = ModelParams::<T>::zeros(spec)?;
    let mut rng = StreamKey::new(seed, 0, 0).rng(Purpose::Init);
    for layer in &mut params.layers {
        let (w, fan_in, fan_out) = match &mut layer.kind {
            ParamKind::Conv(c) => {
                let d = c.kernel.dims().to_vec();
                let (fi, fo) = (d[0] * d[1] * d[2], d[0] * d[1] * d[3]);
                (&mut c.kernel, fi, fo)
            }
            ParamKind::Dense(l) => {
                let d = l.weights.dims().to_vec();
                (&mut l.weights, d[0], d[1])
            }
        };
        let limit = glorot_limit(fan_in, fan_out);
        let dist = Uniform::new(-limit, limit);
        for v in w.data_mut() {
            *v = T::from_f64_lossy(dist.sample(&mut rng));
        }
    }
    Ok(params)
}

pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
