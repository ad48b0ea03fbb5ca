use crate::error::{config_err, Result};

/// Exponential warm-up to `peak` over `ramp_steps`, then multiplicative decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub ramp_steps: u64,
    pub decay_per_step: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            peak: 0.001,
            ramp_steps: 12500,
            decay_per_step: 0.99995,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0) || !(self.decay_per_step > 0.0 && self.decay_per_step <= 1.0) {
            return Err(config_err!("lr peak must be positive and decay in (0,1]"));
        }
        Ok(())
    }

    /// `peak * exp(-5 (1 - s/S)^2)` for `s < S`, `peak * decay^(s - S)` afterwards.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.ramp_steps {
            let x = 1.0 - step as f64 / self.ramp_steps as f64;
            self.peak * (-5.0 * x * x).exp()
        } else {
            self.peak * self.decay_per_step.powf((step - self.ramp_steps) as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(12500), 0.001);
        assert!((s.lr_at(0) - 0.001 * (-5.0f64).exp()).abs() < 1e-15);
        assert!((s.lr_at(0) - 6.74e-6).abs() < 1e-8);
        assert!((s.lr_at(12501) / s.lr_at(12500) - 0.99995).abs() < 1e-12);
    }

    #[test]
    fn zero_ramp_starts_at_peak() {
        let s = LrSchedule {
            ramp_steps: 0,
            ..LrSchedule::default()
        };
        assert_eq!(s.lr_at(0), 0.001);
    }
}
