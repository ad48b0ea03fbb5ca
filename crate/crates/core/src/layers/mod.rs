//! Forward/backward implementations of every layer the CRNN uses.
//!
//! Each layer caches what its backward pass needs during `forward`; calling
//! `backward` without a preceding `forward` is an error rather than a panic.
//! Parameter gradients accumulate into [`Param::grad`] until zeroed.

mod activation;
mod batchnorm;
mod conv;
mod dropout;
pub mod gradcheck;
mod gru;
mod linear;
mod pool;

pub use activation::{relu, sigmoid, sigmoid_scalar, Relu, Sigmoid};
pub use batchnorm::{BatchNorm2d, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv2d, conv2d_backward, Conv2d};
pub use dropout::{dropout, Dropout};
pub use gru::{BiGru, GruDirection};
pub use linear::{linear, Linear};
pub use pool::{avgpool2d, AvgPool2d};

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::tensor::{Param, Real, Tensor};

/// How stochastic and statistics-bearing layers behave during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Dropout active, batch statistics used, running statistics updated.
    Train,
    /// Dropout active and batch statistics used, but running statistics are
    /// left untouched. The mean teacher runs in this mode.
    Perturb,
    /// Dropout off, running statistics used.
    Eval,
}

impl Mode {
    pub fn is_training(self) -> bool {
        !matches!(self, Mode::Eval)
    }

    pub fn updates_running_stats(self) -> bool {
        matches!(self, Mode::Train)
    }
}

pub trait Layer<T: Real> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>>;

    /// Propagates `grad_out` to the input and accumulates parameter gradients.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    fn params<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a Param<T>)>) {}

    fn params_mut<'a>(&'a mut self, _prefix: &str, _out: &mut Vec<(String, &'a mut Param<T>)>) {}

    /// Non-trainable state (batch-norm running statistics).
    fn buffers<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a Tensor<T>)>) {}

    fn buffers_mut<'a>(&'a mut self, _prefix: &str, _out: &mut Vec<(String, &'a mut Tensor<T>)>) {}
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform over `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..bound)))
}
