use rand::RngCore;

use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T = f32> {
    output: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

impl<T: Real> Layer<T> for Relu<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode, _rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let y = relu(x);
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .output
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("relu"))?;
        grad_out.expect_shape(y.shape())?;
        let data = grad_out
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
            .collect();
        Tensor::from_vec(y.shape(), data)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T = f32> {
    output: Option<Tensor<T>>,
}

impl<T: Real> Sigmoid<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

impl<T: Real> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode, _rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let y = sigmoid(x);
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .output
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("sigmoid"))?;
        grad_out.expect_shape(y.shape())?;
        let data = grad_out
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &s)| g * s * (T::one() - s))
            .collect();
        Tensor::from_vec(y.shape(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::<f32>::from_vec(&[3], vec![-1.0, 2.0, 0.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
        assert!(sigmoid_scalar(-800.0f64) >= 0.0 && sigmoid_scalar(-800.0f64) < 1e-300);
        assert_eq!(sigmoid_scalar(800.0f64), 1.0);
        let x = Tensor::<f64>::from_vec(&[2], vec![-3.0, 3.0]).unwrap();
        let y = sigmoid(&x);
        assert!((y.data()[0] + y.data()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_gradient_matches_finite_differences() {
        let mut layer = Sigmoid::<f64>::new();
        let mut rng = rand::rng();
        let points = [-4.0, -1.3, -0.2, 0.0, 0.7, 2.5, 5.0];
        let x = Tensor::from_vec(&[points.len()], points.to_vec()).unwrap();
        layer.forward(&x, Mode::Eval, &mut rng).unwrap();
        let g = layer.backward(&Tensor::full(&[points.len()], 1.0)).unwrap();
        let eps = 1e-4;
        for (i, &p) in points.iter().enumerate() {
            let numeric = (sigmoid_scalar(p + eps) - sigmoid_scalar(p - eps)) / (2.0 * eps);
            let rel =
                (g.data()[i] - numeric).abs() / g.data()[i].abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-6, "x={p}: rel {rel}");
        }
    }
}
