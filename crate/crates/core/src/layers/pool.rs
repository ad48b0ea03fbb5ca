use rand::RngCore;

use super::{Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// Average pooling over `[B,C,T,F]` with kernel equal to stride.
pub fn avgpool2d<T: Real>(input: &Tensor<T>, kt: usize, kf: usize) -> Result<Tensor<T>> {
    if input.ndim() != 4 {
        return Err(shape_err!(
            "avgpool2d input must be [B,C,T,F], got {:?}",
            input.shape()
        ));
    }
    let (b, c, t, f) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    if kt == 0 || kf == 0 || t % kt != 0 || f % kf != 0 {
        return Err(shape_err!(
            "avgpool2d kernel ({kt},{kf}) does not divide extents ({t},{f})"
        ));
    }
    let (to, fo) = (t / kt, f / kf);
    let scale = T::one() / T::lit((kt * kf) as f64);
    let mut out = Tensor::zeros(&[b, c, to, fo]);
    for (src, dst) in input
        .data()
        .chunks(t * f)
        .zip(out.data_mut().chunks_mut(to * fo))
    {
        for ti in 0..t {
            let row = &src[ti * f..(ti + 1) * f];
            let orow = &mut dst[(ti / kt) * fo..(ti / kt + 1) * fo];
            for (o, w) in orow.iter_mut().zip(row.chunks_exact(kf)) {
                *o += w.iter().copied().sum::<T>();
            }
        }
        dst.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AvgPool2d {
    pub kt: usize,
    pub kf: usize,
    input_shape: Option<Vec<usize>>,
}

impl AvgPool2d {
    pub fn new(kt: usize, kf: usize) -> Self {
        Self {
            kt,
            kf,
            input_shape: None,
        }
    }
}

impl<T: Real> Layer<T> for AvgPool2d {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode, _rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let y = avgpool2d(x, self.kt, self.kf)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("avgpool2d"))?;
        let (t, f) = (shape[2], shape[3]);
        let (to, fo) = (t / self.kt, f / self.kf);
        grad_out.expect_shape(&[shape[0], shape[1], to, fo])?;
        let scale = T::one() / T::lit((self.kt * self.kf) as f64);
        let mut grad_in = Tensor::zeros(shape);
        for (g, dst) in grad_out
            .data()
            .chunks(to * fo)
            .zip(grad_in.data_mut().chunks_mut(t * f))
        {
            for ti in 0..t {
                let grow = &g[(ti / self.kt) * fo..(ti / self.kt + 1) * fo];
                for (w, &gv) in dst[ti * f..(ti + 1) * f]
                    .chunks_exact_mut(self.kf)
                    .zip(grow)
                {
                    w.fill(gv * scale);
                }
            }
        }
        Ok(grad_in)
    }
}
