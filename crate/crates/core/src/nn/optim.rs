use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Step-decay schedule: `lr = initial / factor^floor(epoch / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_factor: f64,
    pub period_epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.1,
            decay_factor: 10.0,
            period_epochs: 100,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.initial.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.initial)));
        }
        if !(self.decay_factor >= 1.0) || self.period_epochs == 0 {
            return Err(Error::Config("decay factor must be >= 1 and period >= 1".into()));
        }
        Ok(())
    }

    /// Rate for the 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial / self.decay_factor.powi((epoch / self.period_epochs) as i32)
    }
}

/// SGD with Nesterov momentum in the usual reformulated form:
///
/// ```text
/// v = mu v - lr g
/// theta += mu v - lr g
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SgdNesterov<F> {
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub epoch: usize,
    pub velocity: Vec<Vec<F>>,
}

impl<F: Real> SgdNesterov<F> {
    pub fn new(schedule: LrSchedule, momentum: f64) -> Result<Self> {
        schedule.validate()?;
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(Self {
            schedule,
            momentum,
            epoch: 0,
            velocity: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr_at(self.epoch)
    }

    /// Applies one update from each parameter's gradient. Parameters without
    /// a gradient buffer are treated as having zero gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor<F>]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = &p.grad {
                if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "gradient of parameter {i} (shape {:?}) is non-finite at index {j}",
                        p.shape()
                    )));
                }
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![F::zero(); p.len()]).collect();
        }
        if self.velocity.len() != params.len() || self.velocity.iter().zip(params.iter()).any(|(v, p)| v.len() != p.len()) {
            return Err(Error::Shape("optimizer velocity does not match parameters".into()));
        }
        let lr = F::lit(self.lr());
        let mu = F::lit(self.momentum);
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let Some(g) = p.grad.take() else { continue };
            for ((x, vi), &gi) in p.data.iter_mut().zip(v.iter_mut()).zip(&g) {
                *vi = mu * *vi - lr * gi;
                *x += mu * *vi - lr * gi;
            }
            p.grad = Some(g);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut opt = SgdNesterov::<f64>::new(LrSchedule::default(), 0.0).unwrap();
        let mut p = Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap();
        p.grad = Some(vec![0.5, 1.0]);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data, vec![1.0 - 0.05, -2.0 - 0.1]);
    }

    #[test]
    fn quadratic_matches_scalar_recurrence() {
        let mut opt = SgdNesterov::<f64>::new(LrSchedule::default(), 0.9).unwrap();
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let (mut th, mut v) = (1.0f64, 0.0f64);
        for _ in 0..10 {
            p.grad = Some(vec![p.data[0]]);
            opt.step(&mut [&mut p]).unwrap();
            let g = th;
            v = 0.9 * v - 0.1 * g;
            th += 0.9 * v - 0.1 * g;
            assert!((p.data[0] - th).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_steps_by_ten() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(0), 0.1);
        assert_eq!(s.lr_at(99), 0.1);
        assert!((s.lr_at(100) - 0.01).abs() < 1e-15);
        assert!((s.lr_at(250) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut opt = SgdNesterov::<f32>::new(LrSchedule::default(), 0.9).unwrap();
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        p.grad = Some(vec![f32::NAN]);
        assert!(matches!(opt.step(&mut [&mut p]), Err(Error::NonFinite(_))));
        assert_eq!(p.data, vec![1.0]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SgdNesterov::<f32>::new(LrSchedule::default(), 1.0).is_err());
        let bad = LrSchedule { initial: 0.0, ..LrSchedule::default() };
        assert!(SgdNesterov::<f32>::new(bad, 0.9).is_err());
    }
}
