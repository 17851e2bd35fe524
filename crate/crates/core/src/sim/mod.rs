//! Synthetic signalized-intersection data: signal schedule, driver model,
//! episode simulation, smoothing, snippet extraction and corpus files.

pub mod corpus;
pub mod driver;
pub mod episode;
pub mod generator;
pub mod signal;
pub mod smooth;
pub mod snippet;

pub use driver::{DilemmaBand, DilemmaEvent, Driver, DriverParams, YellowDecision};
pub use episode::{simulate_episode, Episode, EpisodeSpec, MeasurementConfig, Trace, VehicleSpec};
pub use generator::{DriverDistribution, GeneratorConfig, Span};
pub use signal::{tl_state_at, SignalCycleConfig};
pub use smooth::smooth_signal;
pub use snippet::{extract_snippets, snippet_at, WindowConfig};
