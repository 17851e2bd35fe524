//! Future signal phase and timing available to the forecaster.

use crate::domain::{Snippet, TlSignalState};
use crate::error::{Error, Result};
use crate::sim::{tl_state_at, SignalCycleConfig};

/// Maps forecast time `t` (seconds after the origin) to the signal state.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatProvider {
    /// A fixed-time cycle; `t0` is the cycle time at the forecast origin.
    Cycle { cycle: SignalCycleConfig, t0: f64 },
    /// Recorded states at `t = k dt`, held constant past the end.
    Recorded { states: Vec<TlSignalState>, dt: f64 },
}

impl SpatProvider {
    /// The signal states recorded with a snippet (ground truth over the window).
    pub fn from_snippet(sn: &Snippet) -> Result<Self> {
        let states = sn
            .future_contexts
            .iter()
            .map(|c| c.tl.ok_or_else(|| Error::domain("snippet context lacks the signal state")))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpatProvider::Recorded { states, dt: sn.dt })
    }

    pub fn at(&self, t: f64) -> TlSignalState {
        match self {
            SpatProvider::Cycle { cycle, t0 } => tl_state_at(cycle, t0 + t),
            SpatProvider::Recorded { states, dt } => {
                let k = ((t / dt).round().max(0.0) as usize).min(states.len() - 1);
                let base = states[k];
                // extrapolate the timer when t lies past the record
                let extra = (t - k as f64 * dt).max(0.0);
                TlSignalState {
                    phase: base.phase,
                    timer: base.timer + extra,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Phase;

    #[test]
    fn recorded_lookup_and_hold() {
        let states = vec![
            TlSignalState::new(Phase::Red, 10.0).unwrap(),
            TlSignalState::new(Phase::Green, 0.0).unwrap(),
        ];
        let p = SpatProvider::Recorded { states, dt: 0.2 };
        assert_eq!(p.at(0.0).phase, Phase::Red);
        assert_eq!(p.at(0.2).phase, Phase::Green);
        let late = p.at(1.2);
        assert_eq!(late.phase, Phase::Green);
        assert!((late.timer - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_offsets_by_origin() {
        let cycle = SignalCycleConfig::new(30.0, 3.0, 30.0, 0.0).unwrap();
        let p = SpatProvider::Cycle { cycle, t0: 29.0 };
        assert_eq!(p.at(0.0).phase, Phase::Green);
        assert_eq!(p.at(2.0).phase, Phase::Yellow);
    }
}
