use rand::{Rng, RngCore};

use super::{Layer, Mode};
use crate::error::{config_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// Inverted dropout. Returns the output and, in training modes, the
/// per-element scale (`0` or `1/(1-rate)`) that backward must reuse.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut R,
    mode: Mode,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(config_err!("dropout rate must be in [0,1), got {rate}"));
    }
    if !mode.is_training() || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    // an element is dropped when a uniform 32-bit draw falls below rate * 2^32
    let cut = (rate * 4294967296.0) as u64;
    let mut mask = Tensor::zeros(input.shape());
    let mut bytes = [0u8; 4096];
    for chunk in mask.data_mut().chunks_mut(1024) {
        let bytes = &mut bytes[..4 * chunk.len()];
        rng.fill_bytes(bytes);
        for (m, b) in chunk.iter_mut().zip(bytes.chunks_exact(4)) {
            let u = u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as u64;
            *m = if u < cut { T::zero() } else { keep };
        }
    }
    let data = input
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&x, &m)| x * m)
        .collect();
    Ok((Tensor::from_vec(input.shape(), data)?, Some(mask)))
}

#[derive(Clone, Debug)]
pub struct Dropout<T = f32> {
    pub rate: f64,
    // Outer None: no forward yet. Inner None: identity pass.
    mask: Option<Option<Tensor<T>>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(config_err!("dropout rate must be in [0,1), got {rate}"));
        }
        Ok(Self { rate, mask: None })
    }
}

impl<T: Real> Layer<T> for Dropout<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let (y, mask) = dropout(x, self.rate, rng, mode)?;
        self.mask = Some(mask);
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        match self
            .mask
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("dropout"))?
        {
            None => Ok(grad_out.clone()),
            Some(mask) => {
                grad_out.expect_shape(mask.shape())?;
                let data = grad_out
                    .data()
                    .iter()
                    .zip(mask.data())
                    .map(|(&g, &m)| g * m)
                    .collect();
                Tensor::from_vec(mask.shape(), data)
            }
        }
    }
}
