use rand::{Rng, RngCore};

use super::{glorot_uniform, join, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{gemm, Param, Real, Tensor};

const K: usize = 3;
const PAD: usize = 1;

fn check_shapes<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    if input.ndim() != 4 {
        return Err(shape_err!(
            "conv2d input must be [B,C,T,F], got {:?}",
            input.shape()
        ));
    }
    let ws = weight.shape();
    if ws.len() != 4 || ws[2] != K || ws[3] != K {
        return Err(shape_err!(
            "conv2d weight must be [Cout,Cin,3,3], got {:?}",
            ws
        ));
    }
    if ws[1] != input.dim(1) {
        return Err(shape_err!(
            "conv2d channel mismatch: input has {} channels, weight expects {}",
            input.dim(1),
            ws[1]
        ));
    }
    if bias.shape() != [ws[0]] {
        return Err(shape_err!(
            "conv2d bias must be [{}], got {:?}",
            ws[0],
            bias.shape()
        ));
    }
    Ok(())
}

/// Unfolds one `[C,T,F]` image into `[C*9, T*F]` columns with zero padding.
fn im2col<T: Real>(x: &[T], c: usize, t: usize, f: usize, cols: &mut [T]) {
    let tf = t * f;
    for ci in 0..c {
        let plane = &x[ci * tf..(ci + 1) * tf];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut cols[((ci * K + ky) * K + kx) * tf..][..tf];
                for ti in 0..t {
                    let src_t = ti + ky;
                    let dst = &mut row[ti * f..(ti + 1) * f];
                    if src_t < PAD || src_t - PAD >= t {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(src_t - PAD) * f..(src_t - PAD + 1) * f];
                    // dst[fi] = src[fi + kx - 1]
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..f - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..f - 1].copy_from_slice(&src[1..]);
                            dst[f - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into the image.
fn col2im<T: Real>(cols: &[T], c: usize, t: usize, f: usize, x: &mut [T]) {
    let tf = t * f;
    for ci in 0..c {
        let plane = &mut x[ci * tf..(ci + 1) * tf];
        for ky in 0..K {
            for kx in 0..K {
                let row = &cols[((ci * K + ky) * K + kx) * tf..][..tf];
                for ti in 0..t {
                    let src_t = ti + ky;
                    if src_t < PAD || src_t - PAD >= t {
                        continue;
                    }
                    let g = &row[ti * f..(ti + 1) * f];
                    let dst = &mut plane[(src_t - PAD) * f..(src_t - PAD + 1) * f];
                    match kx {
                        0 => {
                            for (d, &v) in dst[..f - 1].iter_mut().zip(&g[1..]) {
                                *d += v;
                            }
                        }
                        1 => {
                            for (d, &v) in dst.iter_mut().zip(g) {
                                *d += v;
                            }
                        }
                        _ => {
                            for (d, &v) in dst[1..].iter_mut().zip(&g[..f - 1]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3x3 convolution, stride 1, zero padding 1: `[B,Cin,T,F] -> [B,Cout,T,F]`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_shapes(input, weight, bias)?;
    let (b, cin, t, f) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let cout = weight.dim(0);
    let tf = t * f;
    let mut out = Tensor::zeros(&[b, cout, t, f]);
    let mut cols = vec![T::zero(); cin * K * K * tf];
    for bi in 0..b {
        im2col(input.slice_outer(bi), cin, t, f, &mut cols);
        let o = out.slice_outer_mut(bi);
        for (co, row) in o.chunks_mut(tf).enumerate() {
            row.fill(bias.data()[co]);
        }
        gemm(
            false,
            false,
            cout,
            tf,
            cin * K * K,
            T::one(),
            weight.data(),
            &cols,
            T::one(),
            o,
        );
    }
    Ok(out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let cout = weight.dim(0);
    check_shapes(input, weight, &Tensor::zeros(&[cout]))?;
    let (b, cin, t, f) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    grad_out.expect_shape(&[b, cout, t, f])?;
    let tf = t * f;
    let ckk = cin * K * K;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = Tensor::zeros(weight.shape());
    let mut grad_b = Tensor::zeros(&[cout]);
    let mut cols = vec![T::zero(); ckk * tf];
    for bi in 0..b {
        let go = grad_out.slice_outer(bi);
        for (co, row) in go.chunks(tf).enumerate() {
            grad_b.data_mut()[co] += row.iter().copied().sum::<T>();
        }
        im2col(input.slice_outer(bi), cin, t, f, &mut cols);
        gemm(
            false,
            true,
            cout,
            ckk,
            tf,
            T::one(),
            go,
            &cols,
            T::one(),
            grad_w.data_mut(),
        );
        gemm(
            true,
            false,
            ckk,
            tf,
            cout,
            T::one(),
            weight.data(),
            go,
            T::zero(),
            &mut cols,
        );
        col2im(&cols, cin, t, f, grad_in.slice_outer_mut(bi));
    }
    Ok((grad_in, grad_w, grad_b))
}

#[derive(Clone, Debug)]
pub struct Conv2d<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let w = glorot_uniform(
            &[out_channels, in_channels, K, K],
            in_channels * K * K,
            out_channels * K * K,
            rng,
        );
        Self::from_params(w, Tensor::zeros(&[out_channels]))
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode, _rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let y = conv2d(x, &self.weight.value, &self.bias.value)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("conv2d"))?;
        let (gi, gw, gb) = conv2d_backward(grad_out, input, &self.weight.value)?;
        self.weight.grad.add_assign(&gw)?;
        self.bias.grad.add_assign(&gb)?;
        Ok(gi)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}
