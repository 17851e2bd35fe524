//! Closed-loop deterministic forecasts and Monte-Carlo rollout ensembles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kinematics::step_dynamics;
use super::spat::SpatProvider;
use crate::domain::{ContextVector, FvRelativeState, Snippet, TimeOfDay, VehicleKinState};
use crate::error::{Error, Result};
use crate::policy::model::{forward, ModelWeights, Tape};
use crate::policy::MixtureParams;
use crate::seeds::derive_seed;

/// Forecast origin: HV history ending at t = 0 and the step geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastInput {
    pub history: Vec<VehicleKinState>,
    pub tl_position: f64,
    /// Time of day at the origin (hours).
    pub tod: f64,
    pub dt: f64,
    pub steps: usize,
}

impl ForecastInput {
    pub fn from_snippet(sn: &Snippet) -> Self {
        ForecastInput {
            history: sn.history.iter().map(|o| o.state).collect(),
            tl_position: sn.tl_position,
            tod: sn.origin().context.tod.hours(),
            dt: sn.dt,
            steps: sn.horizon_steps(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.steps == 0 || self.history.is_empty() {
            return Err(Error::config("forecast needs dt > 0, at least one step and a history"));
        }
        TimeOfDay::new(self.tod)?;
        Ok(())
    }
}

/// Where the forecaster gets the front vehicle's future from.
#[derive(Debug, Clone)]
pub enum FvSource<'a> {
    None,
    /// Forecast the FV from its own history with a model that sees no FV.
    Forecast {
        weights: &'a ModelWeights,
        history: Vec<VehicleKinState>,
    },
    /// Known absolute FV states at t_0 .. t_{N-1}.
    Oracle(Vec<Option<VehicleKinState>>),
}

impl FvSource<'_> {
    /// Absolute FV history reconstructed from a snippet, if the FV is present
    /// over the whole history window.
    pub fn fv_history(sn: &Snippet) -> Option<Vec<VehicleKinState>> {
        sn.history
            .iter()
            .map(|o| o.context.fv.map(|r| clamp_speed(r.absolute(&o.state))))
            .collect()
    }

    /// Ground-truth FV states at the start of every future interval.
    pub fn oracle(sn: &Snippet) -> FvSource<'static> {
        let mut hv = sn.origin().state;
        let mut out = Vec::with_capacity(sn.horizon_steps());
        for (k, ctx) in sn.future_contexts.iter().enumerate() {
            if k > 0 {
                hv = sn.future[k - 1].state;
            }
            out.push(ctx.fv.map(|r| clamp_speed(r.absolute(&hv))));
        }
        FvSource::Oracle(out)
    }
}

fn clamp_speed(x: VehicleKinState) -> VehicleKinState {
    VehicleKinState { s: x.s, v: x.v.max(0.0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrajectory {
    /// States at t = dt .. N dt.
    pub states: Vec<VehicleKinState>,
    /// Acceleration applied over each interval.
    pub accels: Vec<f64>,
    /// `log p(a_k | .)` per step for sampled rollouts.
    pub log_densities: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutEnsemble {
    pub samples: Vec<ForecastTrajectory>,
    /// Sum of the per-step conditional log-densities of each sample.
    pub joint_log_prob: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
}

impl RolloutEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Value of `variable` for every sample at step `k` (1-based time index,
    /// `t = k dt`).
    pub fn values_at(&self, k: usize, variable: Variable) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| {
                let x = s.states[k - 1];
                match variable {
                    Variable::Position => x.s,
                    Variable::Speed => x.v,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    Position,
    Speed,
}

fn check_sources(w: &ModelWeights, spat: Option<&SpatProvider>, fv: &FvSource) -> Result<()> {
    if !w.mode.uses_fv() && !matches!(fv, FvSource::None) {
        return Err(Error::config(format!("a {} model cannot take front-vehicle input", w.mode)));
    }
    if w.mode.uses_tl() && spat.is_none() {
        return Err(Error::config(format!("a {} model needs future signal states", w.mode)));
    }
    Ok(())
}

/// FV states over t_0 .. t_{N-1}, plus any warnings from forecasting them.
fn fv_track(
    input: &ForecastInput,
    spat: Option<&SpatProvider>,
    fv: &FvSource,
) -> Result<(Vec<Option<VehicleKinState>>, Vec<String>)> {
    match fv {
        FvSource::None => Ok((vec![None; input.steps], Vec::new())),
        FvSource::Oracle(states) => {
            if states.len() < input.steps {
                return Err(Error::domain("oracle FV track is shorter than the horizon"));
            }
            Ok((states[..input.steps].to_vec(), Vec::new()))
        }
        FvSource::Forecast { weights, history } => {
            let spat = if weights.mode.uses_tl() { spat } else { None };
            let fv_input = ForecastInput {
                history: history.clone(),
                ..input.clone()
            };
            let traj = forecast_fv(weights, &fv_input, spat)?;
            let mut track = Vec::with_capacity(input.steps);
            track.push(history.last().copied());
            track.extend(traj.states[..input.steps - 1].iter().map(|x| Some(*x)));
            Ok((track, traj.warnings))
        }
    }
}

/// Forecast of the front vehicle treated as a host with no vehicle ahead.
pub fn forecast_fv(w: &ModelWeights, input: &ForecastInput, spat: Option<&SpatProvider>) -> Result<ForecastTrajectory> {
    if w.mode.uses_fv() {
        return Err(Error::config(format!(
            "front-vehicle forecasts need a model without FV input, got {}",
            w.mode
        )));
    }
    forecast_deterministic(w, input, spat, &FvSource::None)
}

/// Rolls the deterministic policy forward for `input.steps` steps.
pub fn forecast_deterministic(
    w: &ModelWeights,
    input: &ForecastInput,
    spat: Option<&SpatProvider>,
    fv: &FvSource,
) -> Result<ForecastTrajectory> {
    if w.is_mixture() {
        return Err(Error::config("deterministic forecasts need a deterministic head"));
    }
    input.validate()?;
    check_sources(w, spat, fv)?;
    let (track, mut warnings) = fv_track(input, spat, fv)?;
    let mut traj = closed_loop(w, input, spat, &track, |out| (out[0], None))?;
    warnings.append(&mut traj.warnings);
    traj.warnings = warnings;
    Ok(traj)
}

/// `samples` independent sampled rollouts. Rollout `m` draws from the stream
/// `(seed, m)`, so the ensemble does not depend on scheduling.
pub fn rollout_probabilistic(
    w: &ModelWeights,
    input: &ForecastInput,
    spat: Option<&SpatProvider>,
    fv: &FvSource,
    samples: usize,
    seed: u64,
) -> Result<RolloutEnsemble> {
    if !w.is_mixture() {
        return Err(Error::config("sampled rollouts need a mixture head"));
    }
    if samples == 0 {
        return Err(Error::config("need at least one rollout"));
    }
    input.validate()?;
    check_sources(w, spat, fv)?;
    let (track, warnings) = fv_track(input, spat, fv)?;
    let runs: Vec<ForecastTrajectory> = (0..samples)
        .into_par_iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, m as u64));
            closed_loop(w, input, spat, &track, |out| {
                let z = MixtureParams::from_raw(out);
                let a = z.sample(&mut rng);
                (a, Some(z.log_density(a)))
            })
            .map(|mut t| {
                let mut all = warnings.clone();
                all.append(&mut t.warnings);
                t.warnings = all;
                t
            })
        })
        .collect::<Result<_>>()?;
    let joint_log_prob = runs
        .iter()
        .map(|t| t.log_densities.as_ref().map_or(0.0, |l| l.iter().sum()))
        .collect();
    Ok(RolloutEnsemble {
        samples: runs,
        joint_log_prob,
        seed,
        dt: input.dt,
    })
}

fn closed_loop(
    w: &ModelWeights,
    input: &ForecastInput,
    spat: Option<&SpatProvider>,
    fv_track: &[Option<VehicleKinState>],
    mut act: impl FnMut(&[f64]) -> (f64, Option<f64>),
) -> Result<ForecastTrajectory> {
    let n = input.steps;
    let mut window = input.history.clone();
    let mut buf = vec![0.0; w.arch.input_dim()];
    let mut tape = Tape::new(&w.arch);
    let mut states = Vec::with_capacity(n);
    let mut accels = Vec::with_capacity(n);
    let mut logs = Vec::new();
    let mut warnings = Vec::new();
    let mut fv_lost = false;
    let mut x = *window.last().expect("validated non-empty history");
    for k in 0..n {
        let t = k as f64 * input.dt;
        let fv = match (fv_lost, fv_track[k]) {
            (false, Some(f)) => {
                let rel = FvRelativeState::between(&x, &f);
                if rel.range > 0.0 {
                    Some(rel)
                } else {
                    fv_lost = true;
                    warnings.push(format!(
                        "front vehicle forecast fell behind the host at t={t:.2}s; dropped from context"
                    ));
                    None
                }
            }
            _ => None,
        };
        let ctx = ContextVector {
            fv,
            tl: spat.map(|p| p.at(t)),
            tod: TimeOfDay::new((input.tod + t / 3600.0).rem_euclid(24.0).min(24.0 - 1e-12))?,
        };
        w.encode(&window, input.tl_position, &ctx, &mut buf)?;
        forward(w, &buf, &mut tape);
        let (a, log_p) = act(&tape.out);
        if !a.is_finite() {
            return Err(Error::domain(format!("policy produced a non-finite action at step {k}")));
        }
        x = step_dynamics(x, a, input.dt);
        states.push(x);
        accels.push(a);
        if let Some(l) = log_p {
            logs.push(l);
        }
        window.rotate_left(1);
        *window.last_mut().unwrap() = x;
    }
    Ok(ForecastTrajectory {
        states,
        accels,
        log_densities: (!logs.is_empty()).then_some(logs),
        warnings,
    })
}
