//! Processes whose innovations and conditional laws are known exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::series::{InnovationsKind, InnovationsSequence, TimeSeries};
use crate::stats::normal_cdf;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("AR(1) coefficient {0} is not in (-1, 1)")]
    NonStationary(f64),
    #[error("noise standard deviation must be positive, got {0}")]
    BadSigma(f64),
    #[error("series length must be positive")]
    EmptyLength,
    #[error("transition matrix must be square with one row per state")]
    MatrixShape,
    #[error("transition matrix row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("transition matrix has an invalid entry at ({row}, {col})")]
    BadEntry { row: usize, col: usize },
    #[error("transition matrix is reducible or periodic")]
    NotPrimitive,
    #[error("state {0} is not one of the chain's states")]
    UnknownState(f64),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Spec {
    pub a: f64,
    pub sigma: f64,
    pub len: usize,
    pub seed: u64,
}

impl Ar1Spec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.a.abs() < 1.0) {
            return Err(SynthError::NonStationary(self.a));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SynthError::BadSigma(self.sigma));
        }
        if self.len == 0 {
            return Err(SynthError::EmptyLength);
        }
        Ok(())
    }

    pub fn stationary_std(&self) -> f64 {
        self.sigma / (1.0 - self.a * self.a).sqrt()
    }
}

/// `x_t = a x_{t-1} + sigma w_t`, started from the stationary marginal.
pub fn gen_ar1(spec: &Ar1Spec) -> Result<TimeSeries, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = Vec::with_capacity(spec.len);
    let x0: f64 = rng.sample(StandardNormal);
    x.push(x0 * spec.stationary_std());
    for t in 1..spec.len {
        let w: f64 = rng.sample(StandardNormal);
        x.push(spec.a * x[t - 1] + spec.sigma * w);
    }
    Ok(TimeSeries::new(x))
}

/// `v_t = Phi((x_t - a x_{t-1}) / sigma)`, with `v_0` taken from the
/// stationary marginal.
pub fn ar1_true_innovations(spec: &Ar1Spec, x: &TimeSeries) -> InnovationsSequence {
    let x = x.values();
    let v = (0..x.len())
        .map(|t| {
            if t == 0 {
                normal_cdf(x[0] / spec.stationary_std())
            } else {
                normal_cdf((x[t] - spec.a * x[t - 1]) / spec.sigma)
            }
        })
        .collect();
    InnovationsSequence::new(v, InnovationsKind::Encoded).expect("CDF values lie in [0, 1]")
}

/// Mean and standard deviation of `X_{t+T}` given `X_t = x_t`.
pub fn ar1_conditional_law(spec: &Ar1Spec, x_t: f64, horizon: usize) -> Result<(f64, f64), SynthError> {
    if horizon == 0 {
        return Err(SynthError::ZeroHorizon);
    }
    let a = spec.a;
    let mean = a.powi(horizon as i32) * x_t;
    let var = if a == 0.0 {
        spec.sigma * spec.sigma
    } else {
        spec.sigma * spec.sigma * (1.0 - a.powi(2 * horizon as i32)) / (1.0 - a * a)
    };
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChainSpec {
    /// Real value emitted in each state.
    pub states: Vec<f64>,
    /// Row-stochastic transition matrix.
    pub transition: Vec<Vec<f64>>,
    pub len: usize,
    pub seed: u64,
}

impl MarkovChainSpec {
    /// Two states `0` and `1` that switch with probability `p`.
    pub fn symmetric(p: f64, len: usize, seed: u64) -> Self {
        Self {
            states: vec![0.0, 1.0],
            transition: vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
            len,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let n = self.states.len();
        if n == 0 || self.transition.len() != n || self.transition.iter().any(|r| r.len() != n) {
            return Err(SynthError::MatrixShape);
        }
        if self.len == 0 {
            return Err(SynthError::EmptyLength);
        }
        for (row, r) in self.transition.iter().enumerate() {
            if let Some(col) = r.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(SynthError::BadEntry { row, col });
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(SynthError::RowSum { row, sum });
            }
        }
        if !is_primitive(&self.transition) {
            return Err(SynthError::NotPrimitive);
        }
        Ok(())
    }

    pub fn state_index(&self, x: f64) -> Result<usize, SynthError> {
        self.states.iter().position(|s| *s == x).ok_or(SynthError::UnknownState(x))
    }

    /// Solves `pi P = pi` by power iteration; `P` is primitive so this converges.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, SynthError> {
        self.validate()?;
        let n = self.states.len();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let next = vec_mat(&pi, &self.transition);
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        Ok(pi)
    }
}

fn vec_mat(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    (0..n).map(|j| (0..n).map(|i| v[i] * m[i][j]).sum()).collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().map(|row| vec_mat(row, b)).collect()
}

/// A nonnegative matrix is primitive iff some power `m <= (n-1)^2 + 1` is
/// strictly positive (Wielandt's bound).
fn is_primitive(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    let pattern: Vec<Vec<f64>> = p
        .iter()
        .map(|r| r.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut power = pattern.clone();
    for _ in 0..(n - 1) * (n - 1) + 1 {
        if power.iter().flatten().all(|v| *v > 0.0) {
            return true;
        }
        power = mat_mul(&power, &pattern)
            .into_iter()
            .map(|r| r.into_iter().map(|v| if v > 0.0 { 1.0 } else { 0.0 }).collect())
            .collect();
    }
    false
}

fn sample_index(rng: &mut impl Rng, pmf: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Simulates the chain from its stationary distribution.
pub fn gen_markov(spec: &MarkovChainSpec) -> Result<TimeSeries, SynthError> {
    let pi = spec.stationary_distribution()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut s = sample_index(&mut rng, &pi);
    let mut x = Vec::with_capacity(spec.len);
    x.push(spec.states[s]);
    for _ in 1..spec.len {
        s = sample_index(&mut rng, &spec.transition[s]);
        x.push(spec.states[s]);
    }
    Ok(TimeSeries::new(x))
}

/// Row of `P^T` for the state currently emitting `x_t`.
pub fn markov_conditional_pmf(spec: &MarkovChainSpec, x_t: f64, horizon: usize) -> Result<Vec<f64>, SynthError> {
    spec.validate()?;
    if horizon == 0 {
        return Err(SynthError::ZeroHorizon);
    }
    let mut row = vec![0.0; spec.states.len()];
    row[spec.state_index(x_t)?] = 1.0;
    for _ in 0..horizon {
        row = vec_mat(&row, &spec.transition);
    }
    Ok(row)
}
