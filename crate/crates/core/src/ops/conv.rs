use rayon::prelude::*;

use super::{axpy, LayerGradients};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Valid-padding, stride-1 2D cross-correlation with a `[kh, kw, cin, cout]`
/// kernel and per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Real> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(kernel: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if kernel.rank() != 4 {
            return Err(Error::shape(format!(
                "conv kernel must be [kh,kw,cin,cout], got {:?}",
                kernel.dims()
            )));
        }
        bias.expect_dims(&[kernel.dims()[3]], "conv bias")?;
        Ok(ConvLayer { kernel, bias })
    }

    pub fn kh(&self) -> usize {
        self.kernel.dims()[0]
    }
    pub fn kw(&self) -> usize {
        self.kernel.dims()[1]
    }
    pub fn cin(&self) -> usize {
        self.kernel.dims()[2]
    }
    pub fn cout(&self) -> usize {
        self.kernel.dims()[3]
    }

    fn output_dims(&self, x: &Tensor<T>) -> Result<[usize; 3]> {
        if x.rank() != 3 {
            return Err(Error::shape(format!(
                "conv input must be [H,W,C], got {:?}",
                x.dims()
            )));
        }
        let (h, w, c) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        if c != self.cin() {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {c}",
                self.cin()
            )));
        }
        if h < self.kh() || w < self.kw() {
            return Err(Error::shape(format!(
                "conv input {h}x{w} smaller than kernel {}x{}",
                self.kh(),
                self.kw()
            )));
        }
        Ok([h - self.kh() + 1, w - self.kw() + 1, self.cout()])
    }
}

/// `out[i,j,o] = bias[o] + Σ_{a,b,c} x[i+a, j+b, c] · kernel[a,b,c,o]`.
///
/// Each output accumulates bias first, then kernel taps in `(a, b, c)` order,
/// so results match a naive nested loop exactly regardless of thread count.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let [oh, ow, cout] = layer.output_dims(x)?;
    let (w, cin) = (x.dims()[1], x.dims()[2]);
    let (kh, kw) = (layer.kh(), layer.kw());
    let xd = x.data();
    let kd = layer.kernel.data();
    let bias = layer.bias.data();

    let mut out = vec![T::zero(); oh * ow * cout];
    out.par_chunks_mut(ow * cout)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, acc) in row.chunks_exact_mut(cout).enumerate() {
                acc.copy_from_slice(bias);
                for a in 0..kh {
                    let xrow = ((i + a) * w + j) * cin;
                    for b in 0..kw {
                        let xpix = &xd[xrow + b * cin..xrow + (b + 1) * cin];
                        let kbase = (a * kw + b) * cin * cout;
                        for (c, &xv) in xpix.iter().enumerate() {
                            let k = &kd[kbase + c * cout..kbase + (c + 1) * cout];
                            axpy(xv, k, acc);
                        }
                    }
                }
            }
        });
    Tensor::new(&[oh, ow, cout], out)
}

/// Exact adjoint of [`conv2d_forward`]. `d_params` is `[d_kernel, d_bias]`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    layer: &ConvLayer<T>,
    d_out: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    let [oh, ow, cout] = layer.output_dims(x)?;
    d_out.expect_dims(&[oh, ow, cout], "conv d_out")?;
    let (h, w, cin) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let (kh, kw) = (layer.kh(), layer.kw());
    let xd = x.data();
    let gd = d_out.data();
    let kd = layer.kernel.data();

    let mut d_bias = vec![T::zero(); cout];
    for g in gd.chunks_exact(cout) {
        for (db, &gv) in d_bias.iter_mut().zip(g) {
            *db = *db + gv;
        }
    }

    // One chunk per kernel tap (a, b); each owns its [cin, cout] slab.
    let mut d_kernel = vec![T::zero(); kh * kw * cin * cout];
    d_kernel
        .par_chunks_mut(cin * cout)
        .enumerate()
        .for_each(|(ab, slab)| {
            let (a, b) = (ab / kw, ab % kw);
            for i in 0..oh {
                for j in 0..ow {
                    let g = &gd[(i * ow + j) * cout..(i * ow + j + 1) * cout];
                    let xbase = ((i + a) * w + j + b) * cin;
                    for c in 0..cin {
                        axpy(xd[xbase + c], g, &mut slab[c * cout..(c + 1) * cout]);
                    }
                }
            }
        });

    // Kernel transposed to [kh, kw, cout, cin] so the input gradient is an axpy over cin.
    let mut kt = vec![T::zero(); kd.len()];
    for ab in 0..kh * kw {
        for c in 0..cin {
            for o in 0..cout {
                kt[(ab * cout + o) * cin + c] = kd[(ab * cin + c) * cout + o];
            }
        }
    }

    let mut d_input = vec![T::zero(); h * w * cin];
    d_input
        .par_chunks_mut(w * cin)
        .enumerate()
        .for_each(|(p, row)| {
            for q in 0..w {
                let acc = &mut row[q * cin..(q + 1) * cin];
                for a in 0..kh {
                    if p < a || p - a >= oh {
                        continue;
                    }
                    let i = p - a;
                    for b in 0..kw {
                        if q < b || q - b >= ow {
                            continue;
                        }
                        let j = q - b;
                        let g = &gd[(i * ow + j) * cout..(i * ow + j + 1) * cout];
                        let kbase = (a * kw + b) * cout * cin;
                        for (o, &gv) in g.iter().enumerate() {
                            axpy(gv, &kt[kbase + o * cin..kbase + (o + 1) * cin], acc);
                        }
                    }
                }
            }
        });

    Ok(LayerGradients {
        d_input: Tensor::new(&[h, w, cin], d_input)?,
        d_params: vec![
            Tensor::new(layer.kernel.dims(), d_kernel)?,
            Tensor::new(&[cout], d_bias)?,
        ],
    })
}
