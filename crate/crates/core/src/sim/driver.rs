//! Synthetic human driver: IDM-style car following, a virtual standing
//! obstacle at the stop bar when a stop is required, and a one-shot
//! pass/stop draw at yellow onset inside the dilemma band.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{FvRelativeState, Phase, TlSignalState, VehicleKinState};
use crate::error::{Error, Result};

/// Bumper-to-bumper offset subtracted from the front-vehicle range (m).
pub const VEHICLE_LENGTH: f64 = 4.5;
/// Stopped vehicles come to rest this far before the stop bar (m).
pub const STOP_MARGIN: f64 = 0.5;
/// A stopped vehicle stays put unless the law asks for more than this (m/s²).
const HOLD_THRESHOLD: f64 = 0.3;
/// Distance to the stop target inside which braking becomes kinematic (m).
const FINAL_APPROACH: f64 = 6.0;
/// Below this speed (m/s) a driver in the final approach brakes to a halt.
const CRAWL_SPEED: f64 = 0.6;
/// Free-road exponent of the IDM.
const DELTA: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverParams {
    /// m/s
    pub desired_speed: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s², positive
    pub comfortable_decel: f64,
    /// m
    pub min_gap: f64,
    /// s
    pub headway_time: f64,
    /// s
    pub reaction_delay: f64,
    pub yellow_pass_propensity: f64,
    /// Std of additive acceleration noise (m/s²).
    pub noise_std: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        DriverParams {
            desired_speed: 14.0,
            max_accel: 1.6,
            comfortable_decel: 2.0,
            min_gap: 2.0,
            headway_time: 1.4,
            reaction_delay: 0.8,
            yellow_pass_propensity: 0.5,
            noise_std: 0.1,
        }
    }
}

impl DriverParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("desired_speed", self.desired_speed),
            ("max_accel", self.max_accel),
            ("comfortable_decel", self.comfortable_decel),
            ("min_gap", self.min_gap),
            ("headway_time", self.headway_time),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.reaction_delay.is_finite() && self.reaction_delay >= 0.0) {
            return Err(Error::config("reaction_delay must be >= 0"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.yellow_pass_propensity) {
            return Err(Error::config(format!(
                "yellow_pass_propensity must lie in [0, 1], got {}",
                self.yellow_pass_propensity
            )));
        }
        Ok(())
    }

    /// Desired speed after the time-of-day modulation: +-10% sinusoid that
    /// peaks at 03:00.
    pub fn with_time_of_day(mut self, tod_hours: f64) -> Self {
        let phase = std::f64::consts::TAU * (tod_hours - 3.0) / 24.0;
        self.desired_speed *= 1.0 + 0.1 * phase.cos();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YellowDecision {
    Pass,
    Stop,
}

/// Time-to-stop-bar window (relative to the yellow duration) in which the
/// pass/stop choice is random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilemmaBand {
    pub lower_offset: f64,
    pub upper_offset: f64,
}

impl Default for DilemmaBand {
    fn default() -> Self {
        DilemmaBand {
            lower_offset: -1.0,
            upper_offset: 2.0,
        }
    }
}

/// Record of a yellow onset that fell inside the dilemma band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilemmaEvent {
    /// Step index at which the driver perceived the yellow.
    pub step: usize,
    pub time_to_bar: f64,
    pub decision: YellowDecision,
}

/// One driver with its per-episode memory.
#[derive(Debug, Clone)]
pub struct Driver {
    pub params: DriverParams,
    pub band: DilemmaBand,
    pub yellow_duration: f64,
    pub dt: f64,
    decision: Option<YellowDecision>,
    dilemma: Option<DilemmaEvent>,
    noise: Option<Normal<f64>>,
}

impl Driver {
    pub fn new(params: DriverParams, band: DilemmaBand, yellow_duration: f64, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        let noise = if params.noise_std > 0.0 {
            Some(Normal::new(0.0, params.noise_std).map_err(|e| Error::config(e.to_string()))?)
        } else {
            None
        };
        Ok(Driver {
            params,
            band,
            yellow_duration,
            dt,
            decision: None,
            dilemma: None,
            noise,
        })
    }

    pub fn decision(&self) -> Option<YellowDecision> {
        self.decision
    }

    /// First yellow onset of the episode that landed in the dilemma band.
    pub fn dilemma(&self) -> Option<DilemmaEvent> {
        self.dilemma
    }

    /// IDM interaction term against an obstacle `gap` metres ahead closing at
    /// `closing_speed` (own speed minus obstacle speed).
    fn interaction(&self, v: f64, closing_speed: f64, gap: f64) -> f64 {
        let p = &self.params;
        let s_star = p.min_gap
            + (v * p.headway_time + v * closing_speed / (2.0 * (p.max_accel * p.comfortable_decel).sqrt()))
                .max(0.0);
        let gap = gap.max(0.1);
        -p.max_accel * (s_star / gap).powi(2)
    }

    fn update_decision<R: Rng + ?Sized>(
        &mut self,
        hv: &VehicleKinState,
        tl: &TlSignalState,
        d_tl: f64,
        step: usize,
        rng: &mut R,
    ) {
        match tl.phase {
            Phase::Green => self.decision = None,
            _ if d_tl <= 0.0 => {}
            Phase::Red => {
                if self.decision.is_none() {
                    self.decision = Some(YellowDecision::Stop);
                }
            }
            Phase::Yellow => {
                if self.decision.is_none() {
                    let ttb = d_tl / hv.v.max(0.1);
                    let lo = self.yellow_duration + self.band.lower_offset;
                    let hi = self.yellow_duration + self.band.upper_offset;
                    let decision = if ttb < lo {
                        YellowDecision::Pass
                    } else if ttb > hi {
                        YellowDecision::Stop
                    } else {
                        let d = if rng.random::<f64>() < self.params.yellow_pass_propensity {
                            YellowDecision::Pass
                        } else {
                            YellowDecision::Stop
                        };
                        if self.dilemma.is_none() {
                            self.dilemma = Some(DilemmaEvent {
                                step,
                                time_to_bar: ttb,
                                decision: d,
                            });
                        }
                        d
                    };
                    self.decision = Some(decision);
                }
            }
        }
    }

    /// Acceleration command for the current step.
    ///
    /// `tl` is the signal state as perceived by the driver (already delayed by
    /// the caller), `d_tl` the distance to the stop bar. The result is bounded
    /// to `[-2 b, a_max]` and never drives the speed negative within one step.
    pub fn accel<R: Rng + ?Sized>(
        &mut self,
        hv: &VehicleKinState,
        fv: Option<&FvRelativeState>,
        tl: &TlSignalState,
        d_tl: f64,
        step: usize,
        rng: &mut R,
    ) -> f64 {
        self.update_decision(hv, tl, d_tl, step, rng);
        let p = self.params;
        let v = hv.v;

        let mut a = p.max_accel * (1.0 - (v / p.desired_speed).powi(DELTA));
        if let Some(fv) = fv {
            let gap = fv.range - VEHICLE_LENGTH;
            a += self.interaction(v, -fv.range_rate, gap).min(0.0);
        }
        let stop_required =
            d_tl > 0.0 && tl.phase != Phase::Green && self.decision == Some(YellowDecision::Stop);
        let mut final_approach = false;
        if stop_required {
            let gap = d_tl - STOP_MARGIN + p.min_gap;
            let free = p.max_accel * (1.0 - (v / p.desired_speed).powi(DELTA));
            a = a.min(free + self.interaction(v, v, gap));
            // IDM only creeps up to the obstacle; close in with the constant
            // deceleration that stops exactly at the target.
            let remaining = d_tl - STOP_MARGIN;
            if remaining < FINAL_APPROACH && v > 0.0 {
                final_approach = true;
                a = if v < CRAWL_SPEED {
                    -v / self.dt
                } else {
                    a.min(-v * v / (2.0 * remaining.max(1e-3)))
                };
            }
        }

        if v <= 0.0 && a < HOLD_THRESHOLD {
            return 0.0;
        }
        if let (Some(noise), false) = (&self.noise, final_approach) {
            a += noise.sample(rng);
        }
        let a = a.clamp(-2.0 * p.comfortable_decel, p.max_accel);
        non_negative_speed_accel(v, a, self.dt)
    }
}

/// Raises `a` just enough that `v + a * dt >= 0` holds exactly in floating point.
pub fn non_negative_speed_accel(v: f64, a: f64, dt: f64) -> f64 {
    if v + a * dt >= 0.0 {
        return a;
    }
    let mut a = -v / dt;
    while v + a * dt < 0.0 {
        a = a.next_up();
    }
    a
}
