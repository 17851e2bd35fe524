//! Human policy models: stacked LSTM encoder with a deterministic or
//! Gaussian-mixture head, trained by behavior cloning.

pub mod arch;
pub mod features;
pub mod io;
pub mod mixture;
pub mod model;
pub mod train;

pub use arch::{HeadKind, PolicyArchitecture};
pub use features::{encode_input, snippet_samples, Sample};
pub use io::{read_weights, write_weights};
pub use mixture::{sample_action, MixtureParams};
pub use model::{
    forward_deterministic, forward_probabilistic, gradients, loss_deterministic, loss_nll, LossKind,
    ModelWeights, Tape,
};
pub use train::{train, train_samples, train_with_validation, EpochRecord, TrainConfig, Trained, TrainingLog};
