use rand::RngCore;

use super::{join, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Param, Real, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over the batch, time and frequency axes
/// of a `[B,C,T,F]` tensor.
///
/// Before any training-mode update the running statistics are mean 0 and
/// variance 1, so an untrained model in eval mode applies `gamma * x / sqrt(1 + eps) + beta`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T = f32> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
struct BnCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl<T: Real> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode, _rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let c = self.channels();
        if x.ndim() != 4 || x.dim(1) != c {
            return Err(shape_err!(
                "batchnorm over {c} channels got input {:?}",
                x.shape()
            ));
        }
        let (b, t, f) = (x.dim(0), x.dim(2), x.dim(3));
        let plane = t * f;
        let count = b * plane;
        let eps = T::lit(self.epsilon);

        let (mean, var): (Vec<T>, Vec<T>) = if mode.is_training() {
            let mut sums = vec![(0.0f64, 0.0f64); c];
            for (i, chunk) in x.data().chunks(plane).enumerate() {
                let (s1, s2) = chunk.iter().fold((0.0f64, 0.0f64), |(a, q), &v| {
                    let v = v.as_f64();
                    (a + v, q + v * v)
                });
                sums[i % c].0 += s1;
                sums[i % c].1 += s2;
            }
            let n = count as f64;
            sums.iter()
                .map(|&(s1, s2)| {
                    let m = s1 / n;
                    (T::lit(m), T::lit((s2 / n - m * m).max(0.0)))
                })
                .unzip()
        } else {
            (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            )
        };

        if mode.updates_running_stats() {
            let mom = T::lit(self.momentum);
            let unbias = if count > 1 {
                T::lit(count as f64 / (count - 1) as f64)
            } else {
                T::one()
            };
            for ch in 0..c {
                let rm = &mut self.running_mean.data_mut()[ch];
                *rm = (T::one() - mom) * *rm + mom * mean[ch];
                let rv = &mut self.running_var.data_mut()[ch];
                *rv = (T::one() - mom) * *rv + mom * var[ch] * unbias;
            }
        }

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut x_hat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        let (g, be) = (self.gamma.value.data(), self.beta.value.data());
        for (i, ((src, xh), out)) in x
            .data()
            .chunks(plane)
            .zip(x_hat.data_mut().chunks_mut(plane))
            .zip(y.data_mut().chunks_mut(plane))
            .enumerate()
        {
            let ch = i % c;
            let (m, inv, g, be) = (mean[ch], inv_std[ch], g[ch], be[ch]);
            for ((&v, h), o) in src.iter().zip(xh.iter_mut()).zip(out.iter_mut()) {
                *h = (v - m) * inv;
                *o = g * *h + be;
            }
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            batch_stats: mode.is_training(),
        });
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("batchnorm2d"))?;
        grad_out.expect_shape(cache.x_hat.shape())?;
        let c = self.channels();
        let (b, plane) = (grad_out.dim(0), grad_out.dim(2) * grad_out.dim(3));
        let n = T::lit((b * plane) as f64);
        let mut grad_in = Tensor::zeros(grad_out.shape());
        let mut sums = vec![(0.0f64, 0.0f64); c];
        for (i, (dy, xh)) in grad_out
            .data()
            .chunks(plane)
            .zip(cache.x_hat.data().chunks(plane))
            .enumerate()
        {
            let (s1, s2) = dy
                .iter()
                .zip(xh)
                .fold((0.0f64, 0.0f64), |(a, q), (&d, &h)| {
                    (a + d.as_f64(), q + (d * h).as_f64())
                });
            sums[i % c].0 += s1;
            sums[i % c].1 += s2;
        }
        for (ch, &(s1, s2)) in sums.iter().enumerate() {
            self.beta.grad.data_mut()[ch] += T::lit(s1);
            self.gamma.grad.data_mut()[ch] += T::lit(s2);
        }
        for (i, ((dy, xh), gi)) in grad_out
            .data()
            .chunks(plane)
            .zip(cache.x_hat.data().chunks(plane))
            .zip(grad_in.data_mut().chunks_mut(plane))
            .enumerate()
        {
            let ch = i % c;
            let scale = self.gamma.value.data()[ch] * cache.inv_std[ch];
            if cache.batch_stats {
                let (mdy, mdyx) = (T::lit(sums[ch].0) / n, T::lit(sums[ch].1) / n);
                for ((&d, &h), o) in dy.iter().zip(xh).zip(gi.iter_mut()) {
                    *o = scale * (d - mdy - h * mdyx);
                }
            } else {
                for (&d, o) in dy.iter().zip(gi.iter_mut()) {
                    *o = scale * d;
                }
            }
        }
        Ok(grad_in)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "running_mean"), &mut self.running_mean));
        out.push((join(prefix, "running_var"), &mut self.running_var));
    }
}
