#![allow(dead_code)]

use hpm_core::policy::{model::LossKind, ModelWeights, PolicyArchitecture, Sample};
use hpm_core::{AblationMode, FeatureScaler};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_arch(rng: &mut ChaCha8Rng, mixture: bool) -> PolicyArchitecture {
    let history = rng.random_range(1..=4);
    let hidden = rng.random_range(1..=5);
    let mlp = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=5)).collect();
    if mixture {
        PolicyArchitecture::mixture(history, hidden, mlp, rng.random_range(1..=3))
    } else {
        PolicyArchitecture::deterministic(history, hidden, mlp)
    }
}

pub fn random_weights(rng: &mut ChaCha8Rng, arch: PolicyArchitecture, mode: AblationMode) -> ModelWeights {
    let dim = arch.input_dim();
    let mean = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let std = (0..dim).map(|_| rng.random_range(0.5..2.0)).collect();
    let scaler = FeatureScaler::new(mean, std).unwrap();
    let n = arch.layout().total;
    let params = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
    ModelWeights::new(arch, mode, scaler, params).unwrap()
}

pub fn random_batch(rng: &mut ChaCha8Rng, arch: &PolicyArchitecture, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            input: (0..arch.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect(),
            target: rng.random_range(-2.0..2.0),
        })
        .collect()
}

/// Largest relative deviation between the analytic gradient and central
/// differences with step `h`. Gradients far below the loss scale are compared
/// against a floor proportional to the loss.
pub fn max_fd_error(w: &ModelWeights, batch: &[Sample], kind: LossKind, h: f64) -> f64 {
    let (loss, grad) = hpm_core::policy::gradients(w, batch, kind).unwrap();
    // central differences cannot resolve gradients below ~eps * |loss| / h
    let floor = 1e-6 * loss.abs().max(1.0);
    let mut probe = w.clone();
    let mut worst: f64 = 0.0;
    for i in 0..w.params.len() {
        let p0 = w.params[i];
        probe.params[i] = p0 + h;
        let up = hpm_core::policy::model::batch_loss(&probe, batch, kind).unwrap();
        probe.params[i] = p0 - h;
        let down = hpm_core::policy::model::batch_loss(&probe, batch, kind).unwrap();
        probe.params[i] = p0;
        let fd = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(floor);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}
