use serde::{Deserialize, Serialize};

use super::params::{GradStore, ParamStore};
use super::NdiffError;

pub trait Optimizer {
    /// Applies one update. Non-finite gradients leave `params` untouched.
    fn step(&mut self, params: &mut ParamStore, grads: &GradStore) -> Result<(), NdiffError>;

    fn steps(&self) -> usize;
}

fn check(params: &ParamStore, grads: &GradStore, step: usize) -> Result<(), NdiffError> {
    if grads.store_id() != params.id() || grads.grads().len() != params.len() {
        return Err(NdiffError::LayoutMismatch);
    }
    if !grads.is_finite() {
        return Err(NdiffError::NonFinite { step });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    t: usize,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr, t: 0 }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore, grads: &GradStore) -> Result<(), NdiffError> {
        check(params, grads, self.t)?;
        let lr = self.lr;
        params.apply_update(|i, values| {
            for (p, g) in values.iter_mut().zip(&grads.grads()[i]) {
                *p -= lr * g;
            }
        });
        self.t += 1;
        Ok(())
    }

    fn steps(&self) -> usize {
        self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam state; serialisable so that training can be checkpointed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    t: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|e| vec![0.0; e.values.len()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut ParamStore, grads: &GradStore) -> Result<(), NdiffError> {
        check(params, grads, self.t)?;
        if self.m.len() != params.len() {
            return Err(NdiffError::LayoutMismatch);
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let (m, v) = (&mut self.m, &mut self.v);
        params.apply_update(|i, values| {
            let g = &grads.grads()[i];
            for j in 0..values.len() {
                m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g[j];
                v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[i][j] / c1;
                let vh = v[i][j] / c2;
                values[j] -= lr * mh / (vh.sqrt() + eps);
            }
        });
        Ok(())
    }

    fn steps(&self) -> usize {
        self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("x", vec![1], vec![x]);
        s
    }

    fn grad(s: &ParamStore, g: f64) -> GradStore {
        let mut gs = GradStore::zeros_like(s);
        gs.grads_mut()[0][0] = g;
        gs
    }

    #[test]
    fn sgd_minimises_quadratic() {
        let mut s = store(3.0);
        let mut opt = Sgd::new(0.1);
        for _ in 0..200 {
            let x = s.values(0)[0];
            let g = grad(&s, 2.0 * (x - 1.0));
            opt.step(&mut s, &g).unwrap();
        }
        assert!((s.values(0)[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        let mut s = store(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        let g = grad(&s, 123.0);
        opt.step(&mut s, &g).unwrap();
        assert!((s.values(0)[0] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut s = store(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        let g = grad(&s, f64::NAN);
        let err = opt.step(&mut s, &g).unwrap_err();
        assert!(err.to_string().contains("divergence detected"));
        assert_eq!(s.values(0)[0], 0.0);
    }
}
