//! Adam optimizer over a [`ParamSet`].

use super::params::ParamSet;
use crate::{Error, Result};

/// Adam with bias correction. State is laid out to match the parameter
/// set it was created for; shape drift is an error.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Standard coefficients: β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|a| vec![0.0; a.len()]).collect(),
            v: params.iter().map(|a| vec![0.0; a.len()]).collect(),
        }
    }

    /// Applies one update using the gradients accumulated in `params.grad`.
    /// Gradients are left untouched; call `params.zero_grads()` afterwards.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::invalid("optimizer state does not match parameter set"));
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for idx in 0..params.len() {
            let arr = params.at_mut(idx);
            if arr.len() != self.m[idx].len() {
                return Err(Error::invalid(format!(
                    "optimizer state shape mismatch for {:?}",
                    arr.name
                )));
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..arr.values.len() {
                let g = arr.grad[i];
                if !g.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient in {:?}",
                        arr.name
                    )));
                }
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                arr.values[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_param_set(v0: f64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::new();
        ps.add("x", 1, 1, Init::Constant(v0), &mut rng).unwrap();
        ps
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut ps = one_param_set(1.25);
        let mut opt = Adam::new(&ps, 0.1);
        opt.step(&mut ps).unwrap();
        assert_eq!(ps.get("x").unwrap().values[0], 1.25);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // With bias correction, a constant gradient g gives a first step
        // of exactly lr (up to eps) regardless of g's magnitude.
        for &g in &[1e-3, 1.0, 250.0] {
            let mut ps = one_param_set(0.0);
            let mut opt = Adam::new(&ps, 0.01);
            ps.at_mut(0).grad[0] = g;
            opt.step(&mut ps).unwrap();
            let delta = ps.get("x").unwrap().values[0];
            assert!((delta + 0.01).abs() < 1e-5, "step {delta} for gradient {g}");
        }
    }

    #[test]
    fn converges_on_a_quadratic() {
        // Minimize (x − 3)²; gradient 2(x − 3).
        let mut ps = one_param_set(-4.0);
        let mut opt = Adam::new(&ps, 0.05);
        for _ in 0..2000 {
            ps.zero_grads();
            let x = ps.get("x").unwrap().values[0];
            ps.at_mut(0).grad[0] = 2.0 * (x - 3.0);
            opt.step(&mut ps).unwrap();
        }
        let x = ps.get("x").unwrap().values[0];
        assert!((x - 3.0).abs() < 1e-3, "ended at {x}");
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut ps = one_param_set(0.0);
        let mut opt = Adam::new(&ps, 0.01);
        ps.at_mut(0).grad[0] = f64::NAN;
        assert!(opt.step(&mut ps).is_err());
    }
}
