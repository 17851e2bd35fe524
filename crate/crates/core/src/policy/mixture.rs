//! Gaussian-mixture action distribution.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_VARIANCE: f64 = 1e-6;
pub const MAX_VARIANCE: f64 = 1e4;
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let z = MixtureParams {
            weights,
            means,
            variances,
        };
        z.validate()?;
        Ok(z)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 || self.means.len() != n || self.variances.len() != n {
            return Err(Error::domain("mixture needs matching non-empty weights/means/variances"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::domain(format!("mixture weights must lie on the simplex (sum {sum})")));
        }
        if self.variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::domain("mixture variances must be positive"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("mixture means must be finite"));
        }
        Ok(())
    }

    /// Builds the distribution from raw head outputs `[logits, means, log-variances]`.
    pub fn from_raw(raw: &[f64]) -> MixtureParams {
        let n = raw.len() / 3;
        let logits = &raw[..n];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        MixtureParams {
            weights: exps.iter().map(|e| e / total).collect(),
            means: raw[n..2 * n].to_vec(),
            variances: raw[2 * n..3 * n].iter().map(|r| variance_map(*r)).collect(),
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    /// `log sum_k pi_k N(a | mu_k, sigma²_k)`, evaluated with log-sum-exp.
    pub fn log_density(&self, a: f64) -> f64 {
        let terms = (0..self.components()).map(|k| {
            let var = self.variances[k];
            let r = a - self.means[k];
            self.weights[k].ln() - 0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var
        });
        log_sum_exp(terms)
    }

    /// Categorical draw of a component, then a Gaussian draw from it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut k = self.components() - 1;
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[k] + self.variances[k].sqrt() * z
    }
}

pub fn sample_action<R: Rng + ?Sized>(z: &MixtureParams, rng: &mut R) -> f64 {
    z.sample(rng)
}

#[inline]
pub(crate) fn variance_map(raw: f64) -> f64 {
    raw.exp().clamp(MIN_VARIANCE, MAX_VARIANCE)
}

/// True where the variance clamp is inactive, i.e. `d variance / d raw = variance`.
#[inline]
pub(crate) fn variance_unclamped(raw: f64) -> bool {
    let e = raw.exp();
    e > MIN_VARIANCE && e < MAX_VARIANCE
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}
