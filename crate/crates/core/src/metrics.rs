//! Scoring rules for probabilistic forecasts.

use serde::{Deserialize, Serialize};

use crate::forecast::{quantile_sorted, ForecastEnsemble, ForecastError};
use crate::stats::{normal_cdf, normal_pdf, normal_quantile};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no records to score")]
    Empty,
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("realized value {0} is not finite")]
    NonFinite(f64),
    #[error("coverage level {0} is not in (0, 1)")]
    BadLevel(f64),
    #[error("insufficient ensemble: {size} samples cannot resolve a {alpha} interval")]
    InsufficientEnsemble { size: usize, alpha: f64 },
    #[error("length mismatch: {intervals} intervals, {realized} realized values")]
    LengthMismatch { intervals: usize, realized: usize },
    #[error("standard deviation must be positive, got {0}")]
    BadStd(f64),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// CRPS of the empirical distribution of `samples` at `realized`.
///
/// Uses the sorted-sample form of `(1/K) sum |s_i - y| - (1/2K^2) sum_ij |s_i - s_j|`,
/// which is exactly the integral of `(F_K(z) - 1{y <= z})^2`.
///
/// ```
/// use innovations::metrics::crps_ensemble;
/// assert_eq!(crps_ensemble(&[0.0, 1.0], 0.0).unwrap(), 0.25);
/// ```
pub fn crps_ensemble(samples: &[f64], realized: f64) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyEnsemble);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    crps_sorted(&sorted, realized)
}

pub(crate) fn crps_sorted(sorted: &[f64], realized: f64) -> Result<f64, MetricsError> {
    if !realized.is_finite() {
        return Err(MetricsError::NonFinite(realized));
    }
    let k = sorted.len() as f64;
    let spread: f64 = sorted.iter().map(|s| (s - realized).abs()).sum::<f64>() / k;
    let pairs: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, s)| (2.0 * (i + 1) as f64 - k - 1.0) * s)
        .sum::<f64>()
        / (k * k);
    Ok((spread - pairs).max(0.0))
}

/// Closed-form CRPS of `N(mean, std^2)` at `realized`.
pub fn crps_gaussian(mean: f64, std: f64, realized: f64) -> Result<f64, MetricsError> {
    if !(std > 0.0) {
        return Err(MetricsError::BadStd(std));
    }
    if !realized.is_finite() {
        return Err(MetricsError::NonFinite(realized));
    }
    let z = (realized - mean) / std;
    Ok(std * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::f64::consts::PI.sqrt()))
}

/// A predictive distribution: generated samples or an analytic Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictive {
    Ensemble { samples: Vec<f64> },
    Gaussian { mean: f64, std: f64 },
}

impl From<&ForecastEnsemble> for Predictive {
    fn from(e: &ForecastEnsemble) -> Self {
        Predictive::Ensemble {
            samples: e.samples().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub target: usize,
    pub realized: f64,
    pub horizon: usize,
    pub forecast: Predictive,
}

impl EvaluationRecord {
    pub fn crps(&self) -> Result<f64, MetricsError> {
        match &self.forecast {
            Predictive::Ensemble { samples } => crps_ensemble(samples, self.realized),
            Predictive::Gaussian { mean, std } => crps_gaussian(*mean, *std, self.realized),
        }
    }

    pub fn interval(&self, alpha: f64) -> Result<CoverageInterval, MetricsError> {
        match &self.forecast {
            Predictive::Ensemble { samples } => coverage_interval(&ForecastEnsemble::new(samples.clone())?, alpha),
            Predictive::Gaussian { mean, std } => gaussian_interval(*mean, *std, alpha),
        }
    }
}

/// Mean CRPS over the records.
pub fn crps_average(records: &[EvaluationRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for r in records {
        total += r.crps()?;
    }
    Ok(total / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageInterval {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CoverageInterval {
    /// Closed interval membership.
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

fn check_level(alpha: f64) -> Result<(), MetricsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(MetricsError::BadLevel(alpha))
    }
}

/// Equal-tail interval `[quantile((1 - alpha)/2), quantile((1 + alpha)/2)]`.
pub fn coverage_interval(ensemble: &ForecastEnsemble, alpha: f64) -> Result<CoverageInterval, MetricsError> {
    check_level(alpha)?;
    let k = ensemble.len();
    let tail = (1.0 - alpha) / 2.0;
    if tail * (k as f64) < 1.0 - 1e-9 {
        return Err(MetricsError::InsufficientEnsemble { size: k, alpha });
    }
    Ok(CoverageInterval {
        alpha,
        lower: quantile_sorted(ensemble.sorted(), tail)?,
        upper: quantile_sorted(ensemble.sorted(), (1.0 + alpha) / 2.0)?,
    })
}

pub fn gaussian_interval(mean: f64, std: f64, alpha: f64) -> Result<CoverageInterval, MetricsError> {
    check_level(alpha)?;
    if !(std > 0.0) {
        return Err(MetricsError::BadStd(std));
    }
    let z = normal_quantile((1.0 + alpha) / 2.0);
    Ok(CoverageInterval {
        alpha,
        lower: mean - z * std,
        upper: mean + z * std,
    })
}

/// Signed coverage error: fraction of realizations inside their interval minus `alpha`.
pub fn cpe(intervals: &[CoverageInterval], realized: &[f64], alpha: f64) -> Result<f64, MetricsError> {
    check_level(alpha)?;
    if intervals.len() != realized.len() {
        return Err(MetricsError::LengthMismatch {
            intervals: intervals.len(),
            realized: realized.len(),
        });
    }
    if intervals.is_empty() {
        return Err(MetricsError::Empty);
    }
    let inside = intervals.iter().zip(realized).filter(|(i, x)| i.contains(**x)).count();
    Ok(inside as f64 / intervals.len() as f64 - alpha)
}

pub fn acpe(intervals: &[CoverageInterval], realized: &[f64], alpha: f64) -> Result<f64, MetricsError> {
    Ok(cpe(intervals, realized, alpha)?.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub alpha: f64,
    pub coverage: f64,
    pub cpe: f64,
    pub acpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub records: usize,
    pub crps: f64,
    pub coverage: Vec<CoverageSummary>,
}

/// Scores a set of records that share one horizon.
pub fn summarize(records: &[EvaluationRecord], alphas: &[f64]) -> Result<HorizonMetrics, MetricsError> {
    let crps = crps_average(records)?;
    let realized: Vec<f64> = records.iter().map(|r| r.realized).collect();
    let mut coverage = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let intervals = records.iter().map(|r| r.interval(alpha)).collect::<Result<Vec<_>, _>>()?;
        let c = cpe(&intervals, &realized, alpha)?;
        coverage.push(CoverageSummary {
            alpha,
            coverage: c + alpha,
            cpe: c,
            acpe: c.abs(),
        });
    }
    Ok(HorizonMetrics {
        horizon: records[0].horizon,
        records: records.len(),
        crps,
        coverage,
    })
}
