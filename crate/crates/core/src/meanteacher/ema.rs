use crate::error::{config_err, Result};
use crate::model::Crnn;

/// Exponential moving average of a student's parameters and batch-norm
/// statistics. The average is accumulated in 64-bit; the teacher model holds
/// its rounding to 32-bit.
#[derive(Clone, Debug)]
pub struct TeacherState {
    pub model: Crnn<f32>,
    pub decay: f64,
    shadow: Vec<Vec<f64>>,
}

impl TeacherState {
    /// Starts as an exact copy of the student.
    pub fn new(student: &Crnn<f32>, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(config_err!("EMA decay must be in [0,1], got {decay}"));
        }
        let shadow = student
            .state()
            .iter()
            .map(|(_, t)| t.data().iter().map(|&v| v as f64).collect())
            .collect();
        Ok(Self {
            model: student.clone(),
            decay,
            shadow,
        })
    }

    /// Replaces the teacher weights, e.g. to start from a state other than the student's.
    pub fn reset_from(&mut self, model: Crnn<f32>) -> Result<()> {
        *self = Self::new(&model, self.decay)?;
        Ok(())
    }

    /// `theta_T <- decay * theta_T + (1 - decay) * theta_S` for every
    /// parameter and running statistic.
    pub fn update(&mut self, student: &Crnn<f32>) -> Result<()> {
        let src = student.state();
        if src.len() != self.shadow.len() {
            return Err(config_err!(
                "architecture mismatch: student has {} tensors, teacher {}",
                src.len(),
                self.shadow.len()
            ));
        }
        let (a, b) = (self.decay, 1.0 - self.decay);
        let mut dst = self.model.state_mut();
        for (((name, s), (dname, d)), sh) in
            src.iter().zip(dst.iter_mut()).zip(self.shadow.iter_mut())
        {
            if name != dname || s.shape() != d.shape() {
                return Err(config_err!("architecture mismatch at {name} / {dname}"));
            }
            for ((x, &y), out) in sh.iter_mut().zip(s.data()).zip(d.data_mut()) {
                *x = a * *x + b * y as f64;
                *out = *x as f32;
            }
        }
        Ok(())
    }
}
