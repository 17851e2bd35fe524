//! Fixtures shared by the benchmarks.

use hpm_core::pipeline::{generate_corpus, Protocol};
use hpm_core::policy::{ModelWeights, PolicyArchitecture};
use hpm_core::sim::{Episode, GeneratorConfig};
use hpm_core::{AblationMode, FeatureScaler, Snippet};

/// A 5-s evaluation snippet with a front vehicle, from a small seeded corpus.
pub fn snippet() -> Snippet {
    let cfg = GeneratorConfig {
        episodes: 20,
        seed: 3,
        ..GeneratorConfig::default()
    };
    let eps = generate_corpus(&cfg).expect("default generator config is valid");
    let refs: Vec<&Episode> = eps.iter().collect();
    Protocol::default()
        .all_eval_snippets(&refs)
        .expect("default protocol is valid")
        .into_iter()
        .find(|s| s.history.iter().all(|o| o.context.fv.is_some()))
        .expect("corpus has a front-vehicle snippet")
}

/// Randomly initialised model with the default layer sizes.
pub fn model(mixture: bool, mode: AblationMode) -> ModelWeights {
    let base = PolicyArchitecture::default();
    let arch = if mixture {
        PolicyArchitecture::mixture(base.history, base.hidden, base.mlp, 2)
    } else {
        base
    };
    let dim = arch.input_dim();
    ModelWeights::init(arch, mode, FeatureScaler::identity(dim), 7).expect("default architecture is valid")
}
