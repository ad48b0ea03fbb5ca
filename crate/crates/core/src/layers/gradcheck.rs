//! Central finite-difference verification of analytic gradients (64-bit).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Param, Tensor};

pub const DEFAULT_EPS: f64 = 1e-4;

/// Something with a scalar objective whose gradients can be compared against
/// finite differences. Stochastic elements must be frozen: repeated calls to
/// `loss` with unchanged tensors must return the same value.
pub trait GradCheckable {
    fn loss(&mut self) -> Result<f64>;

    /// Zeroes gradients, then fills them via forward + backward.
    fn compute_gradients(&mut self) -> Result<()>;

    /// Every checked tensor (parameters and inputs) with its gradient.
    fn tensors(&mut self) -> Vec<(String, &mut Param<f64>)>;
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Worst error per checked tensor, in visiting order.
    pub per_tensor: Vec<(String, f64)>,
}

impl GradCheckReport {
    /// Worst error grouped by the tensor name minus its last component
    /// (`cnn.s0.conv.weight` -> `cnn.s0.conv`).
    pub fn per_layer(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for (name, err) in &self.per_tensor {
            let layer = name
                .rsplit_once('.')
                .map_or(name.as_str(), |(l, _)| l)
                .to_string();
            match out.iter_mut().find(|(l, _)| *l == layer) {
                Some(entry) => entry.1 = entry.1.max(*err),
                None => out.push((layer, *err)),
            }
        }
        out
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares every element of every tensor against central differences.
pub fn grad_check(target: &mut dyn GradCheckable, eps: f64) -> Result<GradCheckReport> {
    target.compute_gradients()?;
    let analytic: Vec<(String, Tensor<f64>)> = target
        .tensors()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();

    let mut report = GradCheckReport::default();
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        if !grad.all_finite() {
            return Err(Error::NonFinite(format!("analytic gradient of {name}")));
        }
        let mut worst = 0.0f64;
        for i in 0..grad.len() {
            let orig = target.tensors()[ti].1.value.data()[i];
            target.tensors()[ti].1.value.data_mut()[i] = orig + eps;
            let plus = target.loss()?;
            target.tensors()[ti].1.value.data_mut()[i] = orig - eps;
            let minus = target.loss()?;
            target.tensors()[ti].1.value.data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing {name}[{i}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report.per_tensor.push((name.clone(), worst));
    }
    Ok(report)
}

impl<G: GradCheckable + ?Sized> GradCheckable for Box<G> {
    fn loss(&mut self) -> Result<f64> {
        (**self).loss()
    }

    fn compute_gradients(&mut self) -> Result<()> {
        (**self).compute_gradients()
    }

    fn tensors(&mut self) -> Vec<(String, &mut Param<f64>)> {
        (**self).tensors()
    }
}

/// Wraps a target and scales its analytic gradients by `factor`, giving a
/// backward pass that is wrong by construction.
pub struct Sabotaged<G> {
    pub inner: G,
    pub factor: f64,
}

impl<G: GradCheckable> GradCheckable for Sabotaged<G> {
    fn loss(&mut self) -> Result<f64> {
        self.inner.loss()
    }

    fn compute_gradients(&mut self) -> Result<()> {
        self.inner.compute_gradients()?;
        let f = self.factor;
        for (_, p) in self.inner.tensors() {
            p.grad = p.grad.map(|g| g * f);
        }
        Ok(())
    }

    fn tensors(&mut self) -> Vec<(String, &mut Param<f64>)> {
        self.inner.tensors()
    }
}

/// A single layer under a fixed random linear read-out `Σ y ⊙ proj`.
///
/// The layer's RNG is re-seeded on every evaluation so dropout masks stay frozen.
pub struct LayerProbe<L> {
    pub layer: L,
    pub input: Param<f64>,
    pub projection: Tensor<f64>,
    pub mode: Mode,
    pub seed: u64,
}

impl<L: Layer<f64>> LayerProbe<L> {
    pub fn new(mut layer: L, input: Tensor<f64>, mode: Mode, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = layer.forward(&input, mode, &mut rng)?;
        let mut proj_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let projection = Tensor::from_fn(y.shape(), |_| {
            rand::Rng::random_range(&mut proj_rng, -1.0..1.0)
        });
        Ok(Self {
            layer,
            input: Param::new(input),
            projection,
            mode,
            seed,
        })
    }
}

impl<L: Layer<f64>> GradCheckable for LayerProbe<L> {
    fn loss(&mut self) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let y = self.layer.forward(&self.input.value, self.mode, &mut rng)?;
        Ok(y.data()
            .iter()
            .zip(self.projection.data())
            .map(|(a, b)| a * b)
            .sum())
    }

    fn compute_gradients(&mut self) -> Result<()> {
        for (_, p) in self.tensors() {
            p.zero_grad();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.layer.forward(&self.input.value, self.mode, &mut rng)?;
        let gi = self.layer.backward(&self.projection)?;
        self.input.grad = gi;
        Ok(())
    }

    fn tensors(&mut self) -> Vec<(String, &mut Param<f64>)> {
        let mut out = Vec::new();
        self.layer.params_mut("layer", &mut out);
        out.push(("input".to_string(), &mut self.input));
        out
    }
}
