//! Generative probabilistic forecasting.
//!
//! The history is encoded once into innovations. Each ensemble member then
//! appends `T` fresh uniform pseudo-innovations and reads the decoder output
//! at the target time, giving one draw from the conditional law of
//! `X_{t+T}` given the history.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{coverage_interval, CoverageInterval, MetricsError};
use crate::model::{ModelError, WiaeModel};
use crate::series::TimeSeries;

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("ensemble sample {0} is not finite")]
    NonFinite(usize),
    #[error("quantile level {0} is not in (0, 1)")]
    BadLevel(f64),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("history of length {found} is shorter than the model window {needed}")]
    ShortHistory { needed: usize, found: usize },
    #[error("model has not been trained")]
    Untrained,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(Box<MetricsError>),
}

impl PartialEq for ForecastError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl From<MetricsError> for ForecastError {
    fn from(e: MetricsError) -> Self {
        ForecastError::Metrics(Box::new(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRequest {
    pub history: TimeSeries,
    pub horizon: usize,
    pub ensemble_size: usize,
    pub seed: u64,
}

/// `K` samples of one target value, with a cached sorted copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEnsemble {
    samples: Vec<f64>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl ForecastEnsemble {
    pub fn new(samples: Vec<f64>) -> Result<Self, ForecastError> {
        if samples.is_empty() {
            return Err(ForecastError::EmptyEnsemble);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(ForecastError::NonFinite(i));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { samples, sorted })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Conditional mean estimate.
pub fn point_mmse(e: &ForecastEnsemble) -> f64 {
    e.samples.iter().sum::<f64>() / e.len() as f64
}

/// Conditional median estimate.
pub fn point_mmae(e: &ForecastEnsemble) -> f64 {
    let s = &e.sorted;
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// `q`-quantile with 1-indexed order statistics `s(i)`: `s(qK)` when `qK`
/// is an integer, otherwise the midpoint of `s(floor(qK))` and
/// `s(floor(qK) + 1)`. Levels with `qK < 1` give the minimum.
///
/// ```
/// use innovations::forecast::{quantile, ForecastEnsemble};
/// let e = ForecastEnsemble::new((1..=10).map(f64::from).collect()).unwrap();
/// assert_eq!(quantile(&e, 0.25).unwrap(), 2.5);
/// ```
pub fn quantile(e: &ForecastEnsemble, q: f64) -> Result<f64, ForecastError> {
    quantile_sorted(&e.sorted, q)
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64, ForecastError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(ForecastError::BadLevel(q));
    }
    if sorted.is_empty() {
        return Err(ForecastError::EmptyEnsemble);
    }
    let k = sorted.len();
    let qk = q * k as f64;
    let nearest = qk.round();
    let at = |i: usize| sorted[i.clamp(1, k) - 1];
    if (qk - nearest).abs() < 1e-9 {
        return Ok(at(nearest as usize));
    }
    let lo = qk.floor() as usize;
    if lo == 0 {
        return Ok(at(1));
    }
    Ok(0.5 * (at(lo) + at(lo + 1)))
}

fn check_model(model: &WiaeModel) -> Result<(), ForecastError> {
    if model.trained_steps() == 0 {
        return Err(ForecastError::Untrained);
    }
    Ok(())
}

pub fn generate_ensemble(model: &WiaeModel, request: &ForecastRequest) -> Result<ForecastEnsemble, ForecastError> {
    check_model(model)?;
    if request.history.len() < model.window() {
        return Err(ForecastError::ShortHistory {
            needed: model.window(),
            found: request.history.len(),
        });
    }
    let v = model.encode_sequence(&request.history)?;
    generate_from_innovations(model, v.values(), request.horizon, request.ensemble_size, request.seed)
}

/// Forecasts from already encoded innovations `v_{0:t}`. Only the decoder and
/// the innovations are used; the raw history is never consulted.
pub fn generate_from_innovations(
    model: &WiaeModel,
    innovations: &[f64],
    horizon: usize,
    ensemble_size: usize,
    seed: u64,
) -> Result<ForecastEnsemble, ForecastError> {
    check_model(model)?;
    if horizon == 0 {
        return Err(ForecastError::ZeroHorizon);
    }
    if ensemble_size == 0 {
        return Err(ForecastError::EmptyEnsemble);
    }
    let window = model.window();
    let from_history = window.saturating_sub(horizon);
    if innovations.len() < from_history.max(1) {
        return Err(ForecastError::ShortHistory {
            needed: from_history.max(1),
            found: innovations.len(),
        });
    }
    let past = &innovations[innovations.len() - from_history..];
    let fresh_used = window - from_history;
    let mut windows = Vec::with_capacity(ensemble_size * window);
    let mut pseudo = vec![0.0; horizon];
    for member in 0..ensemble_size {
        let mut rng = member_rng(seed, member);
        pseudo.iter_mut().for_each(|p| *p = rng.random::<f64>());
        windows.extend_from_slice(past);
        windows.extend_from_slice(&pseudo[horizon - fresh_used..]);
    }
    let samples = model.decode_windows(windows, ensemble_size)?;
    ForecastEnsemble::new(samples)
}

/// Independent stream for ensemble member `member`.
pub fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub q: f64,
    pub value: f64,
}

/// JSON-ready forecast summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOutput {
    pub horizon: usize,
    pub ensemble_size: usize,
    pub seed: u64,
    pub history_len: usize,
    pub mean: f64,
    pub median: f64,
    pub quantiles: Vec<QuantilePoint>,
    pub intervals: Vec<CoverageInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl ForecastOutput {
    pub fn new(
        request: &ForecastRequest,
        ensemble: &ForecastEnsemble,
        quantiles: &[f64],
        alphas: &[f64],
        include_samples: bool,
    ) -> Result<Self, ForecastError> {
        let quantiles = quantiles
            .iter()
            .map(|&q| Ok(QuantilePoint { q, value: quantile(ensemble, q)? }))
            .collect::<Result<Vec<_>, ForecastError>>()?;
        let intervals = alphas
            .iter()
            .map(|&a| coverage_interval(ensemble, a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            horizon: request.horizon,
            ensemble_size: ensemble.len(),
            seed: request.seed,
            history_len: request.history.len(),
            mean: point_mmse(ensemble),
            median: point_mmae(ensemble),
            quantiles,
            intervals,
            samples: include_samples.then(|| ensemble.samples().to_vec()),
        })
    }
}
