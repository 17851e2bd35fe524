//! Human policy models for longitudinal driving near traffic lights, and the
//! closed-loop forecaster that rolls them out under known future signal
//! states.

pub mod domain;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod policy;
pub mod rollout;
pub mod seeds;
pub mod sim;

pub use domain::{
    classify_scenario, make_context, AblationMode, ContextVector, FeatureScaler, FutureStep,
    FvRelativeState, Observation, Phase, ScenarioLabel, Snippet, TimeOfDay, TlSignalState,
    VehicleKinState,
};
pub use error::{Error, Result};
