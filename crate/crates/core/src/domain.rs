//! Shared semantic types: vehicle and signal states, context vectors with
//! ablation masking, scenario labels, and feature scaling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longitudinal state of one vehicle: forward position `s` (m) along the
/// travel direction and speed `v` (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleKinState {
    pub s: f64,
    pub v: f64,
}

impl VehicleKinState {
    pub fn new(s: f64, v: f64) -> Result<Self> {
        if !s.is_finite() || !v.is_finite() {
            return Err(Error::domain(format!("non-finite state (s={s}, v={v})")));
        }
        if v < 0.0 {
            return Err(Error::domain(format!("negative speed {v}")));
        }
        Ok(VehicleKinState { s, v })
    }

    /// Distance to a stop bar located at `tl_position`; positive while approaching.
    #[inline]
    pub fn distance_to(&self, tl_position: f64) -> f64 {
        tl_position - self.s
    }
}

/// Front vehicle expressed relative to the host vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvRelativeState {
    /// FV position minus HV position (m), always positive.
    pub range: f64,
    /// FV speed minus HV speed (m/s).
    pub range_rate: f64,
}

impl FvRelativeState {
    pub fn new(range: f64, range_rate: f64) -> Result<Self> {
        if !(range > 0.0) || !range_rate.is_finite() {
            return Err(Error::domain(format!(
                "front vehicle must be ahead (range={range}, range_rate={range_rate})"
            )));
        }
        Ok(FvRelativeState { range, range_rate })
    }

    pub fn between(hv: &VehicleKinState, fv: &VehicleKinState) -> Self {
        FvRelativeState {
            range: fv.s - hv.s,
            range_rate: fv.v - hv.v,
        }
    }

    /// Absolute FV state given the HV it is relative to.
    pub fn absolute(&self, hv: &VehicleKinState) -> VehicleKinState {
        VehicleKinState {
            s: hv.s + self.range,
            v: (hv.v + self.range_rate).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "G")]
    Green,
    #[serde(rename = "Y")]
    Yellow,
    #[serde(rename = "R")]
    Red,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Green, Phase::Yellow, Phase::Red];

    pub fn symbol(self) -> char {
        match self {
            Phase::Green => 'G',
            Phase::Yellow => 'Y',
            Phase::Red => 'R',
        }
    }

    pub fn index(self) -> usize {
        match self {
            Phase::Green => 0,
            Phase::Yellow => 1,
            Phase::Red => 2,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "G" | "g" => Ok(Phase::Green),
            "Y" | "y" => Ok(Phase::Yellow),
            "R" | "r" => Ok(Phase::Red),
            other => Err(Error::domain(format!("unknown phase '{other}'"))),
        }
    }
}

/// Signal phase and the time elapsed since the phase began.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlSignalState {
    pub phase: Phase,
    /// Seconds since the last phase change.
    pub timer: f64,
}

impl TlSignalState {
    pub fn new(phase: Phase, timer: f64) -> Result<Self> {
        if !(timer >= 0.0) || !timer.is_finite() {
            return Err(Error::domain(format!("signal timer must be >= 0, got {timer}")));
        }
        Ok(TlSignalState { phase, timer })
    }
}

/// Hours since midnight, in `[0, 24)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimeOfDay(f64);

impl TimeOfDay {
    pub fn new(hours: f64) -> Result<Self> {
        if (0.0..24.0).contains(&hours) {
            Ok(TimeOfDay(hours))
        } else {
            Err(Error::domain(format!("time of day must lie in [0, 24), got {hours}")))
        }
    }

    pub fn hours(self) -> f64 {
        self.0
    }

    /// `(sin, cos)` of the daily angle, continuous across midnight.
    pub fn cyclic(self) -> (f64, f64) {
        let angle = std::f64::consts::TAU * self.0 / 24.0;
        angle.sin_cos()
    }
}

impl TryFrom<f64> for TimeOfDay {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        TimeOfDay::new(value)
    }
}

impl From<TimeOfDay> for f64 {
    fn from(value: TimeOfDay) -> f64 {
        value.0
    }
}

/// Which context groups a policy model is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationMode {
    All,
    NoFV,
    NoTL,
    NoFVTL,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::All,
        AblationMode::NoFV,
        AblationMode::NoTL,
        AblationMode::NoFVTL,
    ];

    pub fn uses_fv(self) -> bool {
        matches!(self, AblationMode::All | AblationMode::NoTL)
    }

    pub fn uses_tl(self) -> bool {
        matches!(self, AblationMode::All | AblationMode::NoFV)
    }

    /// The variant that keeps this mode's signal access but drops the front
    /// vehicle. Used to forecast the front vehicle itself.
    pub fn without_fv(self) -> AblationMode {
        if self.uses_tl() {
            AblationMode::NoFV
        } else {
            AblationMode::NoFVTL
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::All => "all",
            AblationMode::NoFV => "nofv",
            AblationMode::NoTL => "notl",
            AblationMode::NoFVTL => "nofvtl",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            AblationMode::All => 0,
            AblationMode::NoFV => 1,
            AblationMode::NoTL => 2,
            AblationMode::NoFVTL => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        AblationMode::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::domain(format!("unknown ablation mode code {code}")))
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(AblationMode::All),
            "nofv" => Ok(AblationMode::NoFV),
            "notl" => Ok(AblationMode::NoTL),
            "nofvtl" => Ok(AblationMode::NoFVTL),
            other => Err(Error::domain(format!("unknown ablation mode '{other}'"))),
        }
    }
}

/// Per-step conditioning input. Absent groups are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub fv: Option<FvRelativeState>,
    pub tl: Option<TlSignalState>,
    pub tod: TimeOfDay,
}

impl ContextVector {
    /// Drops the groups `mode` does not admit.
    pub fn masked(&self, mode: AblationMode) -> ContextVector {
        ContextVector {
            fv: if mode.uses_fv() { self.fv } else { None },
            tl: if mode.uses_tl() { self.tl } else { None },
            tod: self.tod,
        }
    }
}

/// Assembles the context a model running in `mode` may see. Masked inputs are
/// never read.
pub fn make_context(
    mode: AblationMode,
    fv: Option<FvRelativeState>,
    tl: TlSignalState,
    tod: f64,
) -> Result<ContextVector> {
    let tod = TimeOfDay::new(tod)?;
    Ok(ContextVector {
        fv: if mode.uses_fv() { fv } else { None },
        tl: if mode.uses_tl() { Some(tl) } else { None },
        tod,
    })
}

/// Phase composition of a prediction window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioLabel {
    G,
    Y,
    R,
    GY,
    YR,
    RG,
    GYR,
    Other,
}

impl ScenarioLabel {
    pub const ALL: [ScenarioLabel; 8] = [
        ScenarioLabel::G,
        ScenarioLabel::Y,
        ScenarioLabel::R,
        ScenarioLabel::GY,
        ScenarioLabel::YR,
        ScenarioLabel::RG,
        ScenarioLabel::GYR,
        ScenarioLabel::Other,
    ];

    /// The labels that make up the taxonomy (everything except `Other`).
    pub const TAXONOMY: [ScenarioLabel; 7] = [
        ScenarioLabel::G,
        ScenarioLabel::Y,
        ScenarioLabel::R,
        ScenarioLabel::GY,
        ScenarioLabel::YR,
        ScenarioLabel::RG,
        ScenarioLabel::GYR,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioLabel::G => "G",
            ScenarioLabel::Y => "Y",
            ScenarioLabel::R => "R",
            ScenarioLabel::GY => "GY",
            ScenarioLabel::YR => "YR",
            ScenarioLabel::RG => "RG",
            ScenarioLabel::GYR => "GYR",
            ScenarioLabel::Other => "Other",
        }
    }
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s.trim())
            .ok_or_else(|| Error::domain(format!("unknown scenario label '{s}'")))
    }
}

/// Labels a window by the runs of distinct phases it contains.
pub fn classify_scenario(phases: &[Phase]) -> Result<ScenarioLabel> {
    if phases.is_empty() {
        return Err(Error::domain("cannot classify an empty phase sequence"));
    }
    let mut runs: Vec<Phase> = Vec::with_capacity(4);
    for &p in phases {
        if runs.last() != Some(&p) {
            runs.push(p);
            if runs.len() > 3 {
                return Ok(ScenarioLabel::Other);
            }
        }
    }
    use Phase::*;
    let label = match runs.as_slice() {
        [Green] => ScenarioLabel::G,
        [Yellow] => ScenarioLabel::Y,
        [Red] => ScenarioLabel::R,
        [Green, Yellow] => ScenarioLabel::GY,
        [Yellow, Red] => ScenarioLabel::YR,
        [Red, Green] => ScenarioLabel::RG,
        [Green, Yellow, Red] => ScenarioLabel::GYR,
        _ => ScenarioLabel::Other,
    };
    Ok(label)
}

/// One recorded history step: the HV state and the full context at that time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: VehicleKinState,
    pub context: ContextVector,
}

/// Ground truth for one future step: the state reached and the acceleration
/// that was applied over the preceding interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutureStep {
    pub state: VehicleKinState,
    pub accel: f64,
}

/// A training/evaluation sample: `n_tau` history observations ending at t=0,
/// `N` future steps, and the contexts in force at the start of each future
/// interval (t_0 .. t_{N-1}). Contexts are stored unmasked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub episode_id: u64,
    /// Episode step index of the forecast origin.
    pub origin_step: usize,
    /// Episode time of the forecast origin.
    pub t0: f64,
    pub dt: f64,
    pub history: Vec<Observation>,
    pub future: Vec<FutureStep>,
    pub future_contexts: Vec<ContextVector>,
    pub scenario: ScenarioLabel,
    /// Position of the stop bar on the `s` axis (m).
    pub tl_position: f64,
}

impl Snippet {
    /// Stable identifier `episode:origin_step`.
    pub fn id(&self) -> String {
        format!("{}:{}", self.episode_id, self.origin_step)
    }

    pub fn horizon_steps(&self) -> usize {
        self.future.len()
    }

    pub fn origin(&self) -> &Observation {
        self.history.last().expect("snippet history is never empty")
    }

    /// Checks the length and timing invariants.
    pub fn validate(&self, n_tau: usize) -> Result<()> {
        if self.history.len() != n_tau {
            return Err(Error::domain(format!(
                "history has {} steps, expected {n_tau}",
                self.history.len()
            )));
        }
        if self.future.is_empty() || self.future.len() != self.future_contexts.len() {
            return Err(Error::domain("future and future_contexts must be non-empty and aligned"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::domain("dt must be positive"));
        }
        Ok(())
    }
}

/// Per-feature standardization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Spreads below this are treated as constant features and left unscaled.
    const MIN_STD: f64 = 1e-8;

    pub fn identity(dim: usize) -> Self {
        FeatureScaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::domain("scaler mean/std length mismatch"));
        }
        if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("scaler std must be positive and finite"));
        }
        Ok(FeatureScaler { mean, std })
    }

    /// Fits mean and (population) standard deviation column-wise.
    pub fn fit<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut count = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::domain(format!(
                    "row has {} features, expected {dim}",
                    row.len()
                )));
            }
            count += 1;
            // Welford
            for j in 0..dim {
                let delta = row[j] - mean[j];
                mean[j] += delta / count as f64;
                m2[j] += delta * (row[j] - mean[j]);
            }
        }
        if count == 0 {
            return Err(Error::domain("cannot fit a scaler on zero rows"));
        }
        let std = m2
            .iter()
            .map(|&m| {
                let s = (m / count as f64).sqrt();
                if s > Self::MIN_STD {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        FeatureScaler::new(mean, std)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn scale_one(&self, j: usize, x: f64) -> f64 {
        (x - self.mean[j]) / self.std[j]
    }

    pub fn scale(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter().enumerate().map(|(j, &v)| self.scale_one(j, v)).collect())
    }

    pub fn unscale(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(z
            .iter()
            .enumerate()
            .map(|(j, &v)| v * self.std[j] + self.mean[j])
            .collect())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::domain(format!(
                "feature vector has {} entries, scaler expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}
