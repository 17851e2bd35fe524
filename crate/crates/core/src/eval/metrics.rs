//! Trajectory error metrics and boxplot statistics.

use serde::{Deserialize, Serialize};

use crate::domain::FutureStep;
use crate::error::{Error, Result};
use crate::rollout::ForecastTrajectory;

/// MAE, time-weighted absolute error and absolute deviation at the last step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub twae: f64,
    pub adn: f64,
}

/// Metrics for position (m) and speed (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTriple {
    pub position: ErrorMetrics,
    pub speed: ErrorMetrics,
}

impl MetricTriple {
    /// `[pos mae, pos twae, pos adn, speed mae, speed twae, speed adn]`.
    pub fn values(&self) -> [f64; 6] {
        [
            self.position.mae,
            self.position.twae,
            self.position.adn,
            self.speed.mae,
            self.speed.twae,
            self.speed.adn,
        ]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        MetricTriple {
            position: ErrorMetrics {
                mae: v[0],
                twae: v[1],
                adn: v[2],
            },
            speed: ErrorMetrics {
                mae: v[3],
                twae: v[4],
                adn: v[5],
            },
        }
    }
}

/// Metrics of absolute errors `errors[k]` observed at times `times[k]`.
pub fn error_metrics(errors: &[f64], times: &[f64]) -> Result<ErrorMetrics> {
    if errors.is_empty() || errors.len() != times.len() {
        return Err(Error::domain(format!(
            "need equally many errors and times, got {} and {}",
            errors.len(),
            times.len()
        )));
    }
    let n = errors.len() as f64;
    let mae = errors.iter().sum::<f64>() / n;
    let weight: f64 = times.iter().sum();
    let twae = errors.iter().zip(times).map(|(e, t)| e * t).sum::<f64>() / weight;
    Ok(ErrorMetrics {
        mae,
        twae,
        adn: *errors.last().unwrap(),
    })
}

/// Compares a forecast with the ground-truth future; `t_k = k dt`.
pub fn compute_metrics(forecast: &ForecastTrajectory, truth: &[FutureStep], dt: f64) -> Result<MetricTriple> {
    if forecast.states.len() != truth.len() {
        return Err(Error::domain(format!(
            "forecast has {} steps, truth has {}",
            forecast.states.len(),
            truth.len()
        )));
    }
    let times: Vec<f64> = (1..=truth.len()).map(|k| k as f64 * dt).collect();
    let pos: Vec<f64> = forecast
        .states
        .iter()
        .zip(truth)
        .map(|(x, y)| (x.s - y.state.s).abs())
        .collect();
    let spd: Vec<f64> = forecast
        .states
        .iter()
        .zip(truth)
        .map(|(x, y)| (x.v - y.state.v).abs())
        .collect();
    Ok(MetricTriple {
        position: error_metrics(&pos, &times)?,
        speed: error_metrics(&spd, &times)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey boxplot: whiskers at the most extreme data within 1.5 IQR of the
/// quartiles, everything beyond is an outlier.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::domain("boxplot of an empty set"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let q3 = quantile(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    Ok(BoxplotStats {
        q1,
        median: quantile(&v, 0.5),
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers: v.into_iter().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
    })
}
