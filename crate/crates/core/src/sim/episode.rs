//! Closed-loop simulation of one HV (and optionally its FV) approaching a
//! signalized stop bar.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::driver::{DilemmaBand, DilemmaEvent, Driver, DriverParams};
use super::signal::{tl_state_at, SignalCycleConfig};
use super::smooth::smooth_signal;
use crate::domain::{FvRelativeState, TlSignalState, VehicleKinState};
use crate::error::{Error, Result};
use crate::rollout::kinematics::step_dynamics;
use crate::seeds::derive_seed;

/// Uniformly sampled position/speed/acceleration series of one vehicle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl Trace {
    fn with_capacity(n: usize) -> Self {
        Trace {
            s: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn state(&self, k: usize) -> VehicleKinState {
        VehicleKinState {
            s: self.s[k],
            v: self.v[k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub params: DriverParams,
    pub start: VehicleKinState,
}

/// Everything needed to reproduce one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub id: u64,
    pub seed: u64,
    pub signal: SignalCycleConfig,
    /// Hours since midnight at t = 0.
    pub tod: f64,
    pub duration: f64,
    pub dt: f64,
    pub tl_position: f64,
    pub hv: VehicleSpec,
    pub fv: Option<VehicleSpec>,
    pub band: DilemmaBand,
}

/// Recorded episode. Before smoothing, every step satisfies the kinematic
/// transition exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub spec: EpisodeSpec,
    pub hv: Trace,
    pub fv: Option<Trace>,
    pub tl: Vec<TlSignalState>,
    /// HV yellow onset inside the dilemma band, if one happened.
    pub dilemma: Option<DilemmaEvent>,
    /// True once measurement noise and smoothing have been applied.
    pub smoothed: bool,
}

impl Episode {
    pub fn id(&self) -> u64 {
        self.spec.id
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt
    }

    pub fn len(&self) -> usize {
        self.hv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hv.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.spec.dt
    }

    /// Time of day at step `k`, wrapped to `[0, 24)`.
    pub fn tod_at(&self, k: usize) -> f64 {
        let h = (self.spec.tod + self.time(k) / 3600.0).rem_euclid(24.0);
        if h >= 24.0 {
            0.0
        } else {
            h
        }
    }

    pub fn fv_relative(&self, k: usize) -> Option<FvRelativeState> {
        let fv = self.fv.as_ref()?;
        let rel = FvRelativeState::between(&self.hv.state(k), &fv.state(k));
        (rel.range > 0.0).then_some(rel)
    }

    /// Applies measurement noise then least-squares smoothing, mirroring how
    /// logged data is cleaned before training.
    pub fn observed(&self, m: &MeasurementConfig) -> Result<Episode> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.spec.seed, 0x6d65_6173));
        let mut out = self.clone();
        out.hv = m.apply(&self.hv, &mut rng)?;
        if let Some(fv) = &self.fv {
            out.fv = Some(m.apply(fv, &mut rng)?);
        }
        out.smoothed = true;
        Ok(out)
    }
}

/// Sensor noise and the smoothing filter that removes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementConfig {
    pub position_std: f64,
    pub speed_std: f64,
    pub accel_std: f64,
    pub window: usize,
    pub degree: usize,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            position_std: 0.1,
            speed_std: 0.1,
            accel_std: 0.2,
            window: 11,
            degree: 2,
        }
    }
}

impl MeasurementConfig {
    fn apply(&self, trace: &Trace, rng: &mut ChaCha8Rng) -> Result<Trace> {
        let noisy = |xs: &[f64], std: f64, rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
            if std <= 0.0 {
                return Ok(xs.to_vec());
            }
            let n = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
            Ok(xs.iter().map(|x| x + n.sample(rng)).collect())
        };
        let s = noisy(&trace.s, self.position_std, rng)?;
        let v = noisy(&trace.v, self.speed_std, rng)?;
        let a = noisy(&trace.a, self.accel_std, rng)?;
        Ok(Trace {
            s: smooth_signal(&s, self.window, self.degree)?,
            v: smooth_signal(&v, self.window, self.degree)?
                .into_iter()
                .map(|v| v.max(0.0))
                .collect(),
            a: smooth_signal(&a, self.window, self.degree)?,
        })
    }
}

fn validate(spec: &EpisodeSpec) -> Result<usize> {
    spec.signal.validate()?;
    if !(spec.dt > 0.0) || !spec.dt.is_finite() {
        return Err(Error::config(format!("dt must be positive, got {}", spec.dt)));
    }
    if !(spec.duration > 0.0) || !spec.duration.is_finite() {
        return Err(Error::config(format!("duration must be positive, got {}", spec.duration)));
    }
    if !(0.0..24.0).contains(&spec.tod) {
        return Err(Error::config(format!("tod must lie in [0, 24), got {}", spec.tod)));
    }
    spec.hv.params.validate()?;
    VehicleKinState::new(spec.hv.start.s, spec.hv.start.v)?;
    if let Some(fv) = &spec.fv {
        fv.params.validate()?;
        VehicleKinState::new(fv.start.s, fv.start.v)?;
        if fv.start.s <= spec.hv.start.s {
            return Err(Error::config("front vehicle must start ahead of the host vehicle"));
        }
    }
    Ok((spec.duration / spec.dt).round() as usize)
}

struct Run {
    trace: Trace,
    dilemma: Option<DilemmaEvent>,
}

fn run_vehicle(
    spec: &EpisodeSpec,
    vehicle: &VehicleSpec,
    leader: Option<&Trace>,
    steps: usize,
    stream: u64,
) -> Result<Run> {
    let params = vehicle.params.with_time_of_day(spec.tod);
    let mut driver = Driver::new(params, spec.band, spec.signal.yellow, spec.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, stream));
    let mut trace = Trace::with_capacity(steps + 1);
    let mut x = vehicle.start;
    for k in 0..=steps {
        let t = k as f64 * spec.dt;
        let perceived = tl_state_at(&spec.signal, t - params.reaction_delay);
        let fv = leader.map(|l| FvRelativeState::between(&x, &l.state(k)));
        let a = driver.accel(&x, fv.as_ref(), &perceived, spec.tl_position - x.s, k, &mut rng);
        trace.s.push(x.s);
        trace.v.push(x.v);
        trace.a.push(a);
        if k < steps {
            x = step_dynamics(x, a, spec.dt);
        }
    }
    Ok(Run {
        trace,
        dilemma: driver.dilemma(),
    })
}

/// Runs one episode. The FV is simulated first and never reacts to the HV.
/// All randomness derives from `spec.seed`.
pub fn simulate_episode(spec: &EpisodeSpec) -> Result<Episode> {
    let steps = validate(spec)?;
    let fv = match &spec.fv {
        Some(v) => Some(run_vehicle(spec, v, None, steps, 2)?.trace),
        None => None,
    };
    let hv = run_vehicle(spec, &spec.hv, fv.as_ref(), steps, 1)?;
    let tl = (0..=steps)
        .map(|k| tl_state_at(&spec.signal, k as f64 * spec.dt))
        .collect();
    Ok(Episode {
        spec: spec.clone(),
        hv: hv.trace,
        fv,
        tl,
        dilemma: hv.dilemma,
        smoothed: false,
    })
}
