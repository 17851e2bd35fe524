//! Gaussian kernel density estimates over rollout samples.

use serde::{Deserialize, Serialize};

use super::forecast::{RolloutEnsemble, Variable};
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Density {
    /// Density values on the requested grid.
    Values { bandwidth: f64, values: Vec<f64> },
    /// All samples coincide; no density exists.
    PointMass(f64),
}

/// Silverman's rule `1.06 sigma M^(-1/5)`, floored at 1e-3 of the sample
/// range. `None` when the samples have no spread.
pub fn silverman_bandwidth(samples: &[f64]) -> Option<f64> {
    let m = samples.len() as f64;
    let (lo, hi) = min_max(samples);
    let range = hi - lo;
    if !(range > 0.0) {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    Some((1.06 * var.sqrt() * m.powf(-0.2)).max(1e-3 * range))
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Gaussian KDE with bandwidth `h` evaluated at each grid point.
pub fn gaussian_kde(samples: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = INV_SQRT_2PI / (h * samples.len() as f64);
    grid.iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&x| {
                    let u = (g - x) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// `n` evenly spaced points covering the sample range padded by `5 h`.
pub fn density_grid(samples: &[f64], h: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = min_max(samples);
    let (a, b) = (lo - 5.0 * h, hi + 5.0 * h);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Trapezoid-rule integral of `values` over `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Marginal density of `variable` at time index `k` (t = k dt, 1-based).
pub fn marginal_density(ens: &RolloutEnsemble, k: usize, variable: Variable, grid: &[f64]) -> Result<Density> {
    if ens.len() < 2 {
        return Err(Error::domain("density estimation needs at least two rollouts"));
    }
    if k == 0 || ens.samples.iter().any(|s| s.states.len() < k) {
        return Err(Error::domain(format!("step {k} is outside the forecast horizon")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("density grid must be strictly increasing"));
    }
    let xs = ens.values_at(k, variable);
    Ok(match silverman_bandwidth(&xs) {
        Some(h) => Density::Values {
            bandwidth: h,
            values: gaussian_kde(&xs, h, grid),
        },
        None => Density::PointMass(xs[0]),
    })
}

/// Local maxima of a sampled curve as `(grid value, density)`; plateaus count once.
pub fn local_maxima(grid: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let n = values.len();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                out.push((grid[(i + j) / 2], values[i]));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Indices of rollouts whose position density, evaluated at their own
/// position, is at least `threshold` at every step.
pub fn filter_by_density(ens: &RolloutEnsemble, threshold: f64) -> Vec<usize> {
    let m = ens.len();
    let steps = ens.samples.first().map_or(0, |s| s.states.len());
    let mut keep = vec![true; m];
    for k in 1..=steps {
        let xs = ens.values_at(k, Variable::Position);
        let Some(h) = silverman_bandwidth(&xs) else {
            continue;
        };
        let dens = gaussian_kde(&xs, h, &xs);
        for (keep, d) in keep.iter_mut().zip(dens) {
            *keep &= d >= threshold;
        }
    }
    (0..m).filter(|&i| keep[i]).collect()
}
