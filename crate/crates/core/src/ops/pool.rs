use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Non-overlapping max pooling: stride equals the window size, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPoolSpec {
    pub pool_h: usize,
    pub pool_w: usize,
}

impl MaxPoolSpec {
    pub fn square(size: usize) -> Self {
        MaxPoolSpec {
            pool_h: size,
            pool_w: size,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.pool_h == 0 || self.pool_w == 0 {
            return Err(Error::shape("pool size must be positive"));
        }
        if h < self.pool_h || w < self.pool_w {
            return Err(Error::shape(format!(
                "pool input {h}x{w} smaller than window {}x{}",
                self.pool_h, self.pool_w
            )));
        }
        Ok((
            (h - self.pool_h) / self.pool_h + 1,
            (w - self.pool_w) / self.pool_w + 1,
        ))
    }
}

/// Winning input offset for every pooled output, recorded by the forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Max over each window. Rows/columns not covered by a full window are dropped.
/// Ties go to the first element in row-major order.
pub fn maxpool_forward<T: Real>(
    x: &Tensor<T>,
    spec: MaxPoolSpec,
) -> Result<(Tensor<T>, PoolIndices)> {
    if x.rank() != 3 {
        return Err(Error::shape(format!(
            "pool input must be [H,W,C], got {:?}",
            x.dims()
        )));
    }
    let (h, w, c) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let (oh, ow) = spec.output_hw(h, w)?;
    let xd = x.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((i * spec.pool_h) * w + j * spec.pool_w) * c + ch;
                let mut best = xd[best_idx];
                for a in 0..spec.pool_h {
                    for b in 0..spec.pool_w {
                        let idx = ((i * spec.pool_h + a) * w + j * spec.pool_w + b) * c + ch;
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((
        Tensor::new(&[oh, ow, c], out)?,
        PoolIndices {
            input_dims: x.dims().to_vec(),
            output_dims: vec![oh, ow, c],
            argmax,
        },
    ))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward<T: Real>(indices: &PoolIndices, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    d_out.expect_dims(&indices.output_dims, "pool d_out")?;
    let mut d_input = Tensor::zeros(&indices.input_dims)?;
    let di = d_input.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(d_out.data()) {
        di[idx] = di[idx] + g;
    }
    Ok(d_input)
}
