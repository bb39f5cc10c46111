use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `d_out` where the cached input was strictly positive. The derivative
/// at exactly zero is taken to be zero.
pub fn relu_backward<T: Real>(x: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    d_out.expect_dims(x.dims(), "relu d_out")?;
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.dims(), data)
}

/// Max-shifted softmax over a vector of logits.
pub fn softmax<T: Real>(z: &Tensor<T>) -> Result<Tensor<T>> {
    if z.rank() != 1 {
        return Err(Error::shape(format!(
            "softmax expects a vector, got {:?}",
            z.dims()
        )));
    }
    Tensor::new(z.dims(), softmax_slice(z.data())?)
}

/// Row-wise softmax of an `[N, K]` matrix.
pub fn softmax_rows<T: Real>(z: &Tensor<T>) -> Result<Tensor<T>> {
    if z.rank() != 2 {
        return Err(Error::shape(format!(
            "softmax_rows expects [N,K], got {:?}",
            z.dims()
        )));
    }
    let k = z.dims()[1];
    let mut out = Vec::with_capacity(z.len());
    for row in z.data().chunks_exact(k) {
        out.extend(softmax_slice(row)?);
    }
    Tensor::new(z.dims(), out)
}

fn softmax_slice<T: Real>(z: &[T]) -> Result<Vec<T>> {
    if z.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("softmax input contains NaN".into()));
    }
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testutil::{dot, max_rel_err, numeric_grad, random_tensor};
    use proptest::prelude::*;

    #[test]
    fn relu_forward_backward() {
        let x = Tensor::from_vec(vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let d = relu_backward(&x, &Tensor::filled(&[3], 5.0).unwrap()).unwrap();
        assert_eq!(d.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_matches_finite_differences_away_from_kink() {
        let x = random_tensor(&[64], 9).map(|v| if v.abs() < 1e-3 { 0.5 } else { v });
        let r = random_tensor(&[64], 10);
        let d = relu_backward(&x, &r).unwrap();
        let fx = numeric_grad(&x, 1e-5, |xp| dot(&relu_forward(xp), &r));
        assert!(max_rel_err(d.data(), &fx) <= 1e-6);
    }

    #[test]
    fn softmax_closed_forms() {
        let p = softmax(&Tensor::from_vec(vec![0.0f64, 0.0]).unwrap()).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let p = softmax(&Tensor::from_vec(vec![1000.0f32, 1000.0]).unwrap()).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let p = softmax(&Tensor::from_vec(vec![1.0f64.ln(), 3.0f64.ln()]).unwrap()).unwrap();
        assert!((p.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_nan() {
        let z = Tensor::from_vec(vec![0.0f64, f64::NAN]).unwrap();
        assert!(matches!(softmax(&z), Err(Error::Numeric(_))));
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in proptest::collection::vec(-1e4f64..1e4, 1..8), c in -100.0f64..100.0) {
            let t = Tensor::from_vec(z.clone()).unwrap();
            let p = softmax(&t).unwrap();
            prop_assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.data().iter().any(|&v| v > 0.0));
            let shifted = softmax(&t.map(|v| v + c)).unwrap();
            for (a, b) in p.data().iter().zip(shifted.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
