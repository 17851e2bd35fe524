//! Closed-loop forecasting: kinematics, deterministic and sampled rollouts,
//! and marginal density estimation.

pub mod density;
pub mod forecast;
pub mod kinematics;
pub mod output;
pub mod spat;

pub use density::{filter_by_density, marginal_density, Density};
pub use forecast::{
    forecast_deterministic, forecast_fv, rollout_probabilistic, ForecastInput, ForecastTrajectory, FvSource,
    RolloutEnsemble, Variable,
};
pub use kinematics::{propagate_closed_form, step_dynamics};
pub use spat::SpatProvider;
