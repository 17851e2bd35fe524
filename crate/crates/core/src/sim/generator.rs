//! Corpus generator configuration and per-episode parameter sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::driver::{DilemmaBand, DriverParams};
use super::episode::{EpisodeSpec, MeasurementConfig, VehicleSpec};
use super::signal::SignalCycleConfig;
use crate::domain::VehicleKinState;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

/// Closed interval sampled uniformly. `[x, x]` is a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Span { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + u * (self.hi - self.lo)
    }

    fn check(&self, name: &str, min: f64) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && self.lo >= min) {
            return Err(Error::config(format!(
                "{name}: need {min} <= lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Span {
    fn from(v: [f64; 2]) -> Self {
        Span { lo: v[0], hi: v[1] }
    }
}

impl From<Span> for [f64; 2] {
    fn from(s: Span) -> Self {
        [s.lo, s.hi]
    }
}

/// Distributions of driver parameters; each episode draws one value per field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriverDistribution {
    pub desired_speed: Span,
    pub max_accel: Span,
    pub comfortable_decel: Span,
    pub min_gap: Span,
    pub headway_time: Span,
    pub reaction_delay: Span,
    pub yellow_pass_propensity: Span,
    pub noise_std: Span,
}

impl Default for DriverDistribution {
    fn default() -> Self {
        DriverDistribution {
            desired_speed: Span::new(11.0, 16.0),
            max_accel: Span::new(1.3, 2.0),
            comfortable_decel: Span::new(1.8, 2.6),
            min_gap: Span::new(1.5, 2.5),
            headway_time: Span::new(1.0, 1.8),
            reaction_delay: Span::new(0.4, 1.0),
            yellow_pass_propensity: Span::new(0.35, 0.65),
            noise_std: Span::new(0.05, 0.12),
        }
    }
}

impl DriverDistribution {
    fn validate(&self) -> Result<()> {
        self.desired_speed.check("desired_speed", 0.1)?;
        self.max_accel.check("max_accel", 0.01)?;
        self.comfortable_decel.check("comfortable_decel", 0.01)?;
        self.min_gap.check("min_gap", 0.01)?;
        self.headway_time.check("headway_time", 0.01)?;
        self.reaction_delay.check("reaction_delay", 0.0)?;
        self.yellow_pass_propensity.check("yellow_pass_propensity", 0.0)?;
        if self.yellow_pass_propensity.hi > 1.0 {
            return Err(Error::config("yellow_pass_propensity must not exceed 1"));
        }
        self.noise_std.check("noise_std", 0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DriverParams {
        DriverParams {
            desired_speed: self.desired_speed.sample(rng),
            max_accel: self.max_accel.sample(rng),
            comfortable_decel: self.comfortable_decel.sample(rng),
            min_gap: self.min_gap.sample(rng),
            headway_time: self.headway_time.sample(rng),
            reaction_delay: self.reaction_delay.sample(rng),
            yellow_pass_propensity: self.yellow_pass_propensity.sample(rng),
            noise_std: self.noise_std.sample(rng),
        }
    }
}

/// Key-value generator configuration (TOML on disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Episode length (s).
    pub duration: f64,
    pub dt: f64,
    pub green: Span,
    pub yellow: Span,
    pub red: Span,
    /// Stop-bar location on the `s` axis (m).
    pub tl_position: f64,
    /// Initial HV distance to the stop bar (m).
    pub start_distance: Span,
    /// Initial HV speed as a fraction of its desired speed.
    pub start_speed_fraction: Span,
    pub fv_probability: f64,
    /// FV initial gap beyond the HV's equilibrium spacing (m).
    pub fv_extra_gap: Span,
    pub driver: DriverDistribution,
    pub dilemma_band: DilemmaBand,
    pub measurement: MeasurementConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            episodes: 1000,
            seed: 1,
            duration: 30.0,
            dt: 0.2,
            green: Span::new(25.0, 35.0),
            yellow: Span::new(2.5, 4.0),
            red: Span::new(25.0, 35.0),
            tl_position: 0.0,
            start_distance: Span::new(40.0, 220.0),
            start_speed_fraction: Span::new(0.7, 1.0),
            fv_probability: 0.5,
            fv_extra_gap: Span::new(3.0, 30.0),
            driver: DriverDistribution::default(),
            dilemma_band: DilemmaBand::default(),
            measurement: MeasurementConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("generator config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator config always serializes")
    }

    /// CRC-32 of the canonical TOML rendering, as lowercase hex.
    pub fn hash(&self) -> String {
        format!("{:08x}", crc32fast::hash(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes must be at least 1"));
        }
        if !(self.dt > 0.0) || !(self.duration > 0.0) {
            return Err(Error::config("dt and duration must be positive"));
        }
        self.green.check("green", 0.1)?;
        self.yellow.check("yellow", 0.1)?;
        self.red.check("red", 0.1)?;
        self.start_distance.check("start_distance", f64::NEG_INFINITY)?;
        self.start_speed_fraction.check("start_speed_fraction", 0.0)?;
        self.fv_extra_gap.check("fv_extra_gap", 0.0)?;
        if !(0.0..=1.0).contains(&self.fv_probability) {
            return Err(Error::config("fv_probability must lie in [0, 1]"));
        }
        if self.measurement.window.is_multiple_of(2) || self.measurement.degree >= self.measurement.window {
            return Err(Error::config("smoothing window must be odd and exceed the degree"));
        }
        self.driver.validate()
    }

    /// Rounds a duration to the simulation grid (at least one step).
    fn on_grid(&self, x: f64) -> f64 {
        (x / self.dt).round().max(1.0) * self.dt
    }

    /// Draws from `span` and snaps to the grid without leaving the span
    /// (when the span contains a grid point).
    fn grid_sample<R: Rng + ?Sized>(&self, span: &Span, rng: &mut R) -> f64 {
        let x = self.on_grid(span.sample(rng));
        if x < span.lo - 1e-9 && x + self.dt <= span.hi + 1e-9 {
            x + self.dt
        } else if x > span.hi + 1e-9 && x - self.dt >= span.lo - 1e-9 {
            x - self.dt
        } else {
            x
        }
    }

    /// Deterministic spec of episode `index`.
    pub fn episode_spec(&self, index: u64) -> EpisodeSpec {
        let seed = derive_seed(self.seed, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = SignalCycleConfig {
            green: self.grid_sample(&self.green, &mut rng),
            yellow: self.grid_sample(&self.yellow, &mut rng),
            red: self.grid_sample(&self.red, &mut rng),
            offset: 0.0,
        };
        let offset = self.on_grid(rng.random::<f64>() * signal.period()) % signal.period();
        let signal = SignalCycleConfig { offset, ..signal };
        let tod = (rng.random::<f64>() * 24.0).min(24.0 - 1e-9);

        let hv_params = self.driver.sample(&mut rng);
        let hv_start = VehicleKinState {
            s: self.tl_position - self.start_distance.sample(&mut rng),
            v: hv_params.desired_speed * self.start_speed_fraction.sample(&mut rng),
        };
        let fv = if rng.random::<f64>() < self.fv_probability {
            let params = self.driver.sample(&mut rng);
            let v = hv_start.v;
            let gap = params.min_gap + v * hv_params.headway_time + self.fv_extra_gap.sample(&mut rng);
            Some(VehicleSpec {
                params,
                start: VehicleKinState {
                    s: hv_start.s + gap + super::driver::VEHICLE_LENGTH,
                    v: params.desired_speed * self.start_speed_fraction.sample(&mut rng),
                },
            })
        } else {
            None
        };
        EpisodeSpec {
            id: index,
            seed,
            signal,
            tod,
            duration: self.duration,
            dt: self.dt,
            tl_position: self.tl_position,
            hv: VehicleSpec {
                params: hv_params,
                start: hv_start,
            },
            fv,
            band: self.dilemma_band,
        }
    }
}
