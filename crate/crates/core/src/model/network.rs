use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::params::{ModelParams, ParamKind};
use super::spec::{Activation, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::ops::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout, dropout_backward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, softmax_rows, DropoutMask,
    DropoutMode, DropoutSpec, MaxPoolSpec, PoolIndices,
};
use crate::rng::{Purpose, StreamKey};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; one [`StreamKey`] per sample drives its mask.
    Train,
    /// Deterministic; dropout is the identity.
    Infer,
}

#[derive(Debug, Clone)]
enum LayerCache<T: Real> {
    Conv {
        input: Tensor<T>,
        preact: Tensor<T>,
    },
    Pool(PoolIndices),
    Flatten {
        dims: Vec<usize>,
    },
    Dense {
        input: Tensor<T>,
        relu_preact: Option<Tensor<T>>,
    },
    Dropout(DropoutMask),
}

#[derive(Debug, Clone)]
struct SampleCache<T: Real> {
    layers: Vec<LayerCache<T>>,
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real> {
    fingerprint: u64,
    samples: Vec<SampleCache<T>>,
    /// Pre-softmax outputs, `[N, K]`.
    pub logits: Tensor<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    /// Digest of every ReLU on/off decision, pooling winner and dropout mask.
    /// Two forward passes with equal digests are on the same linear piece of
    /// the network.
    pub fn pattern_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in &self.samples {
            for l in &s.layers {
                match l {
                    LayerCache::Conv { preact, .. }
                    | LayerCache::Dense {
                        relu_preact: Some(preact),
                        ..
                    } => {
                        for v in preact.data() {
                            (*v > T::zero()).hash(&mut h);
                        }
                    }
                    LayerCache::Pool(p) => p.argmax.hash(&mut h),
                    LayerCache::Dropout(m) => m.keep.hash(&mut h),
                    _ => {}
                }
            }
        }
        h.finish()
    }
}

fn fingerprint(spec: &ModelSpec) -> u64 {
    let mut h = DefaultHasher::new();
    spec.hash(&mut h);
    h.finish()
}

fn forward_sample<T: Real>(
    params: &ModelParams<T>,
    spec: &ModelSpec,
    x: Tensor<T>,
    mut rng: Option<ChaCha8Rng>,
) -> Result<(Tensor<T>, SampleCache<T>)> {
    let mut act = x;
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut pidx = 0;
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv { name, .. } => {
                let ParamKind::Conv(conv) = &params.layers[pidx].kind else {
                    return Err(Error::State(format!("{name}: parameter kind mismatch")));
                };
                pidx += 1;
                let preact = conv2d_forward(&act, conv)?;
                let out = relu_forward(&preact);
                layers.push(LayerCache::Conv { input: act, preact });
                act = out;
            }
            LayerSpec::MaxPool { size } => {
                let (out, idx) = maxpool_forward(&act, MaxPoolSpec::square(*size))?;
                layers.push(LayerCache::Pool(idx));
                act = out;
            }
            LayerSpec::Flatten => {
                let out = act.flatten_hwc()?;
                layers.push(LayerCache::Flatten {
                    dims: act.dims().to_vec(),
                });
                act = out;
            }
            LayerSpec::Dense {
                name, activation, ..
            } => {
                let ParamKind::Dense(dense) = &params.layers[pidx].kind else {
                    return Err(Error::State(format!("{name}: parameter kind mismatch")));
                };
                pidx += 1;
                let z = dense_forward(&act, dense)?;
                match activation {
                    Activation::Relu => {
                        let out = relu_forward(&z);
                        layers.push(LayerCache::Dense {
                            input: act,
                            relu_preact: Some(z),
                        });
                        act = out;
                    }
                    // Softmax is applied batch-wise after the stack.
                    Activation::Softmax => {
                        layers.push(LayerCache::Dense {
                            input: act,
                            relu_preact: None,
                        });
                        act = z;
                    }
                }
            }
            LayerSpec::Dropout { rate } => {
                let (out, mask) = match rng.as_mut() {
                    Some(r) => {
                        let spec = DropoutSpec {
                            rate: *rate,
                            mode: DropoutMode::Train,
                        };
                        dropout(&act, spec, r)?
                    }
                    None => {
                        let n = act.len();
                        (
                            act.clone(),
                            DropoutMask {
                                keep: vec![true; n],
                                scale: 1.0,
                            },
                        )
                    }
                };
                layers.push(LayerCache::Dropout(mask));
                act = out;
            }
        }
    }
    Ok((act, SampleCache { layers }))
}

/// Runs the stack on an `[N, H, W, C]` batch and returns `[N, K]` softmax
/// probabilities plus the activation cache. Samples are processed in parallel;
/// each one's dropout mask comes from `keys[n]` alone.
pub fn model_forward<T: Real>(
    params: &ModelParams<T>,
    spec: &ModelSpec,
    batch: &Tensor<T>,
    mode: Mode,
    keys: &[StreamKey],
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    if batch.rank() != 4 || batch.dims()[1..] != spec.input {
        return Err(Error::shape(format!(
            "model expects [N,{},{},{}] input, got {:?}",
            spec.input[0],
            spec.input[1],
            spec.input[2],
            batch.dims()
        )));
    }
    if params.layers.len()
        != spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. } | LayerSpec::Dense { .. }))
            .count()
    {
        return Err(Error::State(
            "parameters do not belong to this model".into(),
        ));
    }
    let n = batch.dims()[0];
    if mode == Mode::Train && keys.len() != n {
        return Err(Error::Input(format!(
            "training forward needs {n} stream keys, got {}",
            keys.len()
        )));
    }

    let results: Vec<Result<(Tensor<T>, SampleCache<T>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rng = match mode {
                Mode::Train => Some(keys[i].rng(Purpose::Dropout)),
                Mode::Infer => None,
            };
            forward_sample(params, spec, batch.outer(i)?, rng)
        })
        .collect();

    let mut logits = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for r in results {
        let (z, cache) = r?;
        logits.push(z);
        samples.push(cache);
    }
    let logits = Tensor::stack(&logits)?;
    let probs = softmax_rows(&logits)?;
    Ok((
        probs,
        ForwardCache {
            fingerprint: fingerprint(spec),
            samples,
            logits,
        },
    ))
}

fn backward_sample<T: Real>(
    params: &ModelParams<T>,
    spec: &ModelSpec,
    cache: &SampleCache<T>,
    d_logits: Tensor<T>,
) -> Result<ModelParams<T>> {
    let mut grads = ModelParams::zeros(spec)?;
    let mut pidx = params.layers.len();
    let mut d = d_logits;
    for (layer, lc) in spec.layers.iter().zip(&cache.layers).rev() {
        d = match (layer, lc) {
            (LayerSpec::Conv { .. }, LayerCache::Conv { input, preact }) => {
                pidx -= 1;
                let ParamKind::Conv(conv) = &params.layers[pidx].kind else {
                    return Err(Error::State("parameter kind mismatch".into()));
                };
                let dz = relu_backward(preact, &d)?;
                let g = conv2d_backward(input, conv, &dz)?;
                if let ParamKind::Conv(gc) = &mut grads.layers[pidx].kind {
                    let [dk, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("two conv grads");
                    gc.kernel = dk;
                    gc.bias = db;
                }
                g.d_input
            }
            (LayerSpec::MaxPool { .. }, LayerCache::Pool(idx)) => maxpool_backward(idx, &d)?,
            (LayerSpec::Flatten, LayerCache::Flatten { dims }) => d.reshape(dims)?,
            (LayerSpec::Dense { .. }, LayerCache::Dense { input, relu_preact }) => {
                pidx -= 1;
                let ParamKind::Dense(dense) = &params.layers[pidx].kind else {
                    return Err(Error::State("parameter kind mismatch".into()));
                };
                let dz = match relu_preact {
                    Some(z) => relu_backward(z, &d)?,
                    None => d,
                };
                let g = dense_backward(input, dense, &dz)?;
                if let ParamKind::Dense(gd) = &mut grads.layers[pidx].kind {
                    let [dw, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("two dense grads");
                    gd.weights = dw;
                    gd.bias = db;
                }
                g.d_input
            }
            (LayerSpec::Dropout { .. }, LayerCache::Dropout(mask)) => dropout_backward(mask, &d)?,
            _ => return Err(Error::State("cache does not match the layer stack".into())),
        };
    }
    Ok(grads)
}

/// Reverse pass from `[N, K]` gradients with respect to the pre-softmax
/// logits. Per-sample gradients are computed in parallel and then summed in
/// ascending sample order.
pub fn model_backward<T: Real>(
    params: &ModelParams<T>,
    spec: &ModelSpec,
    cache: &ForwardCache<T>,
    d_logits: &Tensor<T>,
) -> Result<ModelParams<T>> {
    if cache.fingerprint != fingerprint(spec) {
        return Err(Error::State(
            "activation cache was produced by a different model".into(),
        ));
    }
    if cache.samples.is_empty() {
        return Err(Error::State("activation cache is empty".into()));
    }
    d_logits.expect_dims(cache.logits.dims(), "d_logits")?;

    let per_sample: Vec<Result<ModelParams<T>>> = cache
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| backward_sample(params, spec, s, d_logits.outer(i)?))
        .collect();
    let mut iter = per_sample.into_iter();
    let mut total = iter.next().expect("non-empty batch")?;
    for g in iter {
        total.accumulate(&g?)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lightpneumonet, build_reduced, init_params};
    use crate::ops::testutil::random_tensor;

    fn batch(spec: &ModelSpec, n: usize, seed: u64) -> Tensor<f64> {
        let [h, w, c] = spec.input;
        random_tensor(&[n, h, w, c], seed).map(|v| 0.5 + 0.5 * v)
    }

    #[test]
    fn zero_params_give_uniform_probabilities() {
        let spec = build_reduced();
        let p = ModelParams::<f64>::zeros(&spec).unwrap();
        let x = Tensor::zeros(&[3, 20, 20, 1]).unwrap();
        let (probs, _) = model_forward(&p, &spec, &x, Mode::Infer, &[]).unwrap();
        assert_eq!(probs.dims(), &[3, 2]);
        assert!(probs.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn reference_forward_shape_and_normalisation() {
        let spec = build_lightpneumonet();
        let p = init_params::<f32>(&spec, 3).unwrap();
        let x = batch(&spec, 1, 4).cast::<f32>();
        let (probs, cache) = model_forward(&p, &spec, &x, Mode::Infer, &[]).unwrap();
        assert_eq!(probs.dims(), &[1, 2]);
        assert!((probs.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(cache.batch_size(), 1);
    }

    #[test]
    fn inference_is_deterministic_and_training_keyed() {
        let spec = build_reduced();
        let p = init_params::<f64>(&spec, 1).unwrap();
        let x = batch(&spec, 2, 9);
        let a = model_forward(&p, &spec, &x, Mode::Infer, &[]).unwrap().0;
        let b = model_forward(&p, &spec, &x, Mode::Infer, &[]).unwrap().0;
        assert_eq!(a, b);

        let keys = [StreamKey::new(5, 0, 0), StreamKey::new(5, 0, 1)];
        let t1 = model_forward(&p, &spec, &x, Mode::Train, &keys).unwrap().1;
        let t2 = model_forward(&p, &spec, &x, Mode::Train, &keys).unwrap().1;
        assert_eq!(t1.pattern_digest(), t2.pattern_digest());
        assert!(model_forward(&p, &spec, &x, Mode::Train, &keys[..1]).is_err());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let spec = build_reduced();
        let p = init_params::<f64>(&spec, 1).unwrap();
        let x = Tensor::zeros(&[1, 21, 20, 1]).unwrap();
        assert!(matches!(
            model_forward(&p, &spec, &x, Mode::Infer, &[]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let spec = build_reduced();
        let p = init_params::<f64>(&spec, 2).unwrap();
        let (_, cache) = model_forward(&p, &spec, &batch(&spec, 2, 1), Mode::Infer, &[]).unwrap();
        let g = model_backward(&p, &spec, &cache, &Tensor::zeros(&[2, 2]).unwrap()).unwrap();
        assert!(g
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let spec = build_reduced();
        let p = init_params::<f64>(&spec, 2).unwrap();
        let one = batch(&spec, 1, 17);
        let two = Tensor::stack(&[one.outer(0).unwrap(), one.outer(0).unwrap()]).unwrap();
        let d1 = Tensor::new(&[1, 2], vec![0.3, -0.3]).unwrap();
        let d2 = Tensor::new(&[2, 2], vec![0.3, -0.3, 0.3, -0.3]).unwrap();
        let (_, c1) = model_forward(&p, &spec, &one, Mode::Infer, &[]).unwrap();
        let (_, c2) = model_forward(&p, &spec, &two, Mode::Infer, &[]).unwrap();
        let g1 = model_backward(&p, &spec, &c1, &d1).unwrap();
        let g2 = model_backward(&p, &spec, &c2, &d2).unwrap();
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn stale_cache_is_state_error() {
        let spec = build_reduced();
        let p = init_params::<f64>(&spec, 2).unwrap();
        let (_, cache) = model_forward(&p, &spec, &batch(&spec, 1, 1), Mode::Infer, &[]).unwrap();
        let mut other = build_reduced();
        other.layers[14] = LayerSpec::Dropout { rate: 0.5 };
        assert!(matches!(
            model_backward(&p, &other, &cache, &Tensor::zeros(&[1, 2]).unwrap()),
            Err(Error::State(_))
        ));
    }
}
