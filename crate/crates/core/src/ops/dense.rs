use super::{axpy, LayerGradients};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Fully connected layer, weights stored `[n_in, n_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T: Real> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::shape(format!(
                "dense weights must be [n_in,n_out], got {:?}",
                weights.dims()
            )));
        }
        bias.expect_dims(&[weights.dims()[1]], "dense bias")?;
        Ok(DenseLayer { weights, bias })
    }

    pub fn n_in(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn n_out(&self) -> usize {
        self.weights.dims()[1]
    }
}

/// `y[j] = bias[j] + Σ_i x[i]·W[i,j]`
pub fn dense_forward<T: Real>(x: &Tensor<T>, layer: &DenseLayer<T>) -> Result<Tensor<T>> {
    x.expect_dims(&[layer.n_in()], "dense input")?;
    let n_out = layer.n_out();
    let mut y = layer.bias.data().to_vec();
    for (row, &xv) in layer.weights.data().chunks_exact(n_out).zip(x.data()) {
        axpy(xv, row, &mut y);
    }
    Tensor::new(&[n_out], y)
}

/// `d_params` is `[d_weights, d_bias]`.
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    layer: &DenseLayer<T>,
    d_out: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    x.expect_dims(&[layer.n_in()], "dense input")?;
    d_out.expect_dims(&[layer.n_out()], "dense d_out")?;
    let n_out = layer.n_out();
    let g = d_out.data();
    let mut d_w = vec![T::zero(); layer.weights.len()];
    for (row, &xv) in d_w.chunks_exact_mut(n_out).zip(x.data()) {
        axpy(xv, g, row);
    }
    let d_x: Vec<T> = layer
        .weights
        .data()
        .chunks_exact(n_out)
        .map(|row| row.iter().zip(g).fold(T::zero(), |s, (&w, &gv)| s + w * gv))
        .collect();
    Ok(LayerGradients {
        d_input: Tensor::new(&[layer.n_in()], d_x)?,
        d_params: vec![
            Tensor::new(layer.weights.dims(), d_w)?,
            Tensor::new(&[n_out], g.to_vec())?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testutil::{dot, max_rel_err, numeric_grad, random_tensor};

    #[test]
    fn hand_computed_product() {
        let l = DenseLayer::new(
            Tensor::new(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap(),
            Tensor::from_vec(vec![0.5, -0.5]).unwrap(),
        )
        .unwrap();
        let y = dense_forward(&Tensor::from_vec(vec![1.0, 2.0]).unwrap(), &l).unwrap();
        assert_eq!(y.data(), &[7.5, 9.5]);
    }

    #[test]
    fn identity_and_shapes() {
        let mut eye = Tensor::<f64>::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            eye.set(&[i, i], 1.0).unwrap();
        }
        let l = DenseLayer::new(eye, Tensor::zeros(&[3]).unwrap()).unwrap();
        let x = Tensor::from_vec(vec![0.3, -2.0, 5.0]).unwrap();
        assert_eq!(dense_forward(&x, &l).unwrap(), x);

        let l = DenseLayer::new(
            Tensor::<f32>::zeros(&[512, 128]).unwrap(),
            Tensor::zeros(&[128]).unwrap(),
        )
        .unwrap();
        let y = dense_forward(&Tensor::zeros(&[512]).unwrap(), &l).unwrap();
        assert_eq!(y.dims(), &[128]);
        assert!(matches!(
            dense_forward(&Tensor::zeros(&[511]).unwrap(), &l),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_outer_product_and_zeros() {
        let l = DenseLayer::new(random_tensor(&[2, 2], 1), random_tensor(&[2], 2)).unwrap();
        let x = Tensor::from_vec(vec![1.0, 0.0]).unwrap();
        let g = dense_backward(&x, &l, &Tensor::from_vec(vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(g.d_params[0].data(), &[1.0, 1.0, 0.0, 0.0]);

        let g = dense_backward(&x, &l, &Tensor::zeros(&[2]).unwrap()).unwrap();
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
        assert!(g
            .d_params
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in [41u64, 42, 43] {
            let x = random_tensor(&[7], seed);
            let w = random_tensor(&[7, 4], seed + 1);
            let b = random_tensor(&[4], seed + 2);
            let r = random_tensor(&[4], seed + 3);
            let l = DenseLayer::new(w.clone(), b.clone()).unwrap();
            let g = dense_backward(&x, &l, &r).unwrap();
            let fx = numeric_grad(&x, 1e-5, |xp| dot(&dense_forward(xp, &l).unwrap(), &r));
            assert!(max_rel_err(g.d_input.data(), &fx) <= 1e-6);
            let fw = numeric_grad(&w, 1e-5, |wp| {
                let l = DenseLayer::new(wp.clone(), b.clone()).unwrap();
                dot(&dense_forward(&x, &l).unwrap(), &r)
            });
            assert!(max_rel_err(g.d_params[0].data(), &fw) <= 1e-6);
            let fb = numeric_grad(&b, 1e-5, |bp| {
                let l = DenseLayer::new(w.clone(), bp.clone()).unwrap();
                dot(&dense_forward(&x, &l).unwrap(), &r)
            });
            assert!(max_rel_err(g.d_params[1].data(), &fb) <= 1e-6);
        }
    }
}
