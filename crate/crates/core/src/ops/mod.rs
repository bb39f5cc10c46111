//! Layer kernels. Every kernel is a pure function of its inputs (and, for
//! dropout, an explicit random stream), generic over `f32`/`f64`.

mod activation;
mod conv;
mod dense;
mod dropout;
mod pool;

pub use activation::{relu_backward, relu_forward, softmax, softmax_rows};
pub use conv::{conv2d_backward, conv2d_forward, ConvLayer};
pub use dense::{dense_backward, dense_forward, DenseLayer};
pub use dropout::{dropout, dropout_backward, DropoutMask, DropoutMode, DropoutSpec};
pub use pool::{maxpool_backward, maxpool_forward, MaxPoolSpec, PoolIndices};

use crate::tensor::{Real, Tensor};

/// Gradient of a layer's scalar objective with respect to its input and its
/// parameters (in the layer's parameter order).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<T: Real> {
    pub d_input: Tensor<T>,
    pub d_params: Vec<Tensor<T>>,
}

#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + alpha * xv;
    }
}
