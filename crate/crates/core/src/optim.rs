use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self { rho: 0.95, epsilon: 1e-6 }
    }
}

/// ADADELTA: per-parameter decaying averages of squared gradients and of
/// squared updates; the step is their RMS ratio times the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Adadelta<T> {
    rho: T,
    epsilon: T,
    sq_grad: Vec<T>,
    sq_update: Vec<T>,
}

impl<T: Real> Adadelta<T> {
    pub fn new(len: usize, config: AdadeltaConfig) -> Self {
        Self {
            rho: T::of(config.rho),
            epsilon: T::of(config.epsilon),
            sq_grad: vec![T::zero(); len],
            sq_update: vec![T::zero(); len],
        }
    }

    pub fn sq_grad(&self) -> &[T] {
        &self.sq_grad
    }

    pub fn sq_update(&self) -> &[T] {
        &self.sq_update
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.sq_grad.len() || grads.len() != self.sq_grad.len() {
            return Err(shape("optimizer state, parameters and gradients differ in length"));
        }
        let (rho, eps) = (self.rho, self.epsilon);
        let keep = T::one() - rho;
        for (((x, &g), eg), ex) in params
            .iter_mut()
            .zip(grads)
            .zip(self.sq_grad.iter_mut())
            .zip(self.sq_update.iter_mut())
        {
            *eg = rho * *eg + keep * g * g;
            let dx = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
            *ex = rho * *ex + keep * dx * dx;
            *x += dx;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_by_hand() {
        let mut opt = Adadelta::<f64>::new(1, AdadeltaConfig::default());
        let mut x = [0.0];
        opt.step(&mut x, &[1.0]).unwrap();
        assert!((opt.sq_grad()[0] - 0.05).abs() < 1e-15);
        let want = -(1e-6f64 / 0.050001).sqrt();
        assert!((x[0] - want).abs() < 1e-15);
        assert!((x[0] + 0.004472).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut opt = Adadelta::<f64>::new(1, AdadeltaConfig::default());
        let mut x = [1.0];
        opt.step(&mut x, &[2.0]).unwrap();
        let (eg, ex, x1) = (opt.sq_grad()[0], opt.sq_update()[0], x[0]);
        opt.step(&mut x, &[0.0]).unwrap();
        assert_eq!(x[0], x1);
        assert!((opt.sq_grad()[0] - 0.95 * eg).abs() < 1e-15);
        assert!((opt.sq_update()[0] - 0.95 * ex).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = Adadelta::<f32>::new(2, AdadeltaConfig::default());
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
