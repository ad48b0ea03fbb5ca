use rand::{Rng, RngCore};

use super::{glorot_uniform, join, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{gemm, Param, Real, Tensor};

/// Affine map over the trailing axis: `[.., Din] -> [.., Dout]` with `W: [Dout, Din]`.
pub fn linear<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (dout, din) = (weight.dim(0), weight.dim(1));
    if input.ndim() == 0 || input.shape()[input.ndim() - 1] != din {
        return Err(shape_err!(
            "linear expects trailing dim {din}, got input {:?}",
            input.shape()
        ));
    }
    if bias.shape() != [dout] {
        return Err(shape_err!(
            "linear bias must be [{dout}], got {:?}",
            bias.shape()
        ));
    }
    let rows = input.len() / din;
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    let mut out = Tensor::zeros(&shape);
    for row in out.data_mut().chunks_mut(dout) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        false,
        true,
        rows,
        dout,
        din,
        T::one(),
        input.data(),
        weight.data(),
        T::one(),
        out.data_mut(),
    );
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Linear<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let w = glorot_uniform(&[out_dim, in_dim], in_dim, out_dim, rng);
        Self::from_params(w, Tensor::zeros(&[out_dim]))
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.dim(0)
    }
}

impl<T: Real> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode, _rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let y = linear(x, &self.weight.value, &self.bias.value)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("linear"))?;
        let (dout, din) = (self.out_dim(), self.in_dim());
        let rows = x.len() / din;
        if grad_out.len() != rows * dout {
            return Err(shape_err!(
                "linear grad has {} values, expected {}",
                grad_out.len(),
                rows * dout
            ));
        }
        gemm(
            true,
            false,
            dout,
            din,
            rows,
            T::one(),
            grad_out.data(),
            x.data(),
            T::one(),
            self.weight.grad.data_mut(),
        );
        for row in grad_out.data().chunks(dout) {
            for (b, &g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut grad_in = Tensor::zeros(x.shape());
        gemm(
            false,
            false,
            rows,
            din,
            dout,
            T::one(),
            grad_out.data(),
            self.weight.value.data(),
            T::zero(),
            grad_in.data_mut(),
        );
        Ok(grad_in)
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
