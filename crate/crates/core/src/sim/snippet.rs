//! Sliding-window snippet extraction.

use serde::{Deserialize, Serialize};

use super::episode::Episode;
use crate::domain::{
    classify_scenario, ContextVector, FutureStep, Observation, Phase, Snippet, TimeOfDay,
};
use crate::error::{Error, Result};

/// History/horizon geometry of a snippet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// History length tau (s).
    pub history: f64,
    /// Prediction horizon T (s).
    pub horizon: f64,
    pub dt: f64,
    /// Steps between consecutive window starts.
    pub stride: usize,
}

impl WindowConfig {
    pub fn new(history: f64, horizon: f64, dt: f64, stride: usize) -> Result<Self> {
        let cfg = WindowConfig {
            history,
            horizon,
            dt,
            stride,
        };
        if !(dt > 0.0) || !(history >= 0.0) || !(horizon > 0.0) || stride == 0 {
            return Err(Error::config(format!("invalid window config {cfg:?}")));
        }
        Ok(cfg)
    }

    /// Number of history states, `tau / dt + 1`.
    pub fn n_tau(&self) -> usize {
        (self.history / self.dt).round() as usize + 1
    }

    /// Number of future steps, `T / dt`.
    pub fn n_future(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Full (unmasked) context recorded at step `k`.
pub fn context_at(ep: &Episode, k: usize) -> ContextVector {
    ContextVector {
        fv: ep.fv_relative(k),
        tl: Some(ep.tl[k]),
        tod: TimeOfDay::new(ep.tod_at(k)).expect("tod wrapped into range"),
    }
}

/// Cuts every window of `cfg` out of `ep` and labels it by the phases over
/// the closed prediction window `[0, T]`. Returns an empty list if the episode
/// is too short.
pub fn extract_snippets(ep: &Episode, cfg: &WindowConfig) -> Result<Vec<Snippet>> {
    if (cfg.dt - ep.dt()).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "window dt {} does not match episode dt {}",
            cfg.dt,
            ep.dt()
        )));
    }
    let n_tau = cfg.n_tau();
    let n_fut = cfg.n_future();
    let len = ep.len();
    if len < n_tau + n_fut {
        return Ok(Vec::new());
    }
    let last_start = len - (n_tau + n_fut);
    let mut out = Vec::with_capacity(last_start / cfg.stride + 1);
    for start in (0..=last_start).step_by(cfg.stride) {
        out.push(snippet_at(ep, start + n_tau - 1, n_tau, n_fut)?);
    }
    Ok(out)
}

/// One snippet whose forecast origin is step `origin`.
pub fn snippet_at(ep: &Episode, origin: usize, n_tau: usize, n_fut: usize) -> Result<Snippet> {
    if origin + 1 < n_tau || origin + n_fut >= ep.len() {
        return Err(Error::domain(format!(
            "origin {origin} leaves no room for {n_tau} history and {n_fut} future steps"
        )));
    }
    let history = (origin + 1 - n_tau..=origin)
        .map(|k| Observation {
            state: ep.hv.state(k),
            context: context_at(ep, k),
        })
        .collect();
    let future = (origin + 1..=origin + n_fut)
        .map(|k| FutureStep {
            state: ep.hv.state(k),
            accel: ep.hv.a[k - 1],
        })
        .collect();
    let future_contexts = (origin..origin + n_fut).map(|k| context_at(ep, k)).collect();
    let phases: Vec<Phase> = ep.tl[origin..=origin + n_fut].iter().map(|s| s.phase).collect();
    Ok(Snippet {
        episode_id: ep.id(),
        origin_step: origin,
        t0: ep.time(origin),
        dt: ep.dt(),
        history,
        future,
        future_contexts,
        scenario: classify_scenario(&phases)?,
        tl_position: ep.spec.tl_position,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ScenarioLabel;
    use crate::sim::driver::{DilemmaBand, DriverParams};
    use crate::sim::episode::{simulate_episode, EpisodeSpec, VehicleSpec};
    use crate::sim::signal::SignalCycleConfig;
    use crate::domain::VehicleKinState;

    fn episode(duration: f64, offset: f64) -> Episode {
        simulate_episode(&EpisodeSpec {
            id: 1,
            seed: 1,
            signal: SignalCycleConfig::new(30.0, 3.0, 30.0, offset).unwrap(),
            tod: 12.0,
            duration,
            dt: 0.2,
            tl_position: 0.0,
            hv: VehicleSpec {
                params: DriverParams::default(),
                start: VehicleKinState { s: -100.0, v: 10.0 },
            },
            fv: None,
            band: DilemmaBand::default(),
        })
        .unwrap()
    }

    fn cfg() -> WindowConfig {
        WindowConfig::new(2.0, 5.0, 0.2, 1).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(extract_snippets(&episode(10.0, 0.0), &cfg()).unwrap().len(), 16);
        assert_eq!(extract_snippets(&episode(7.0, 0.0), &cfg()).unwrap().len(), 1);
        assert!(extract_snippets(&episode(6.0, 0.0), &cfg()).unwrap().is_empty());
    }

    #[test]
    fn layout() {
        let ep = episode(10.0, 0.0);
        let s = &extract_snippets(&ep, &cfg()).unwrap()[3];
        s.validate(11).unwrap();
        assert_eq!(s.origin_step, 13);
        assert_eq!(s.history.last().unwrap().state, ep.hv.state(13));
        assert_eq!(s.future[0].state, ep.hv.state(14));
        assert_eq!(s.future[0].accel, ep.hv.a[13]);
        assert_eq!(s.future_contexts[0].tl, Some(ep.tl[13]));
        assert_eq!(s.future.len(), 25);
    }

    #[test]
    fn green_window_is_labelled_g() {
        let snippets = extract_snippets(&episode(10.0, 0.0), &cfg()).unwrap();
        assert!(snippets.iter().all(|s| s.scenario == ScenarioLabel::G));
    }

    #[test]
    fn transitions_are_labelled() {
        // yellow starts at t = 5 s
        let snippets = extract_snippets(&episode(20.0, 25.0), &cfg()).unwrap();
        assert_eq!(snippets[0].scenario, ScenarioLabel::GY);
        assert!(snippets.iter().any(|s| s.scenario == ScenarioLabel::GYR));
        assert!(snippets.iter().any(|s| s.scenario == ScenarioLabel::YR));
        assert!(snippets.iter().any(|s| s.scenario == ScenarioLabel::R));
    }

    #[test]
    fn dt_mismatch_is_an_error() {
        let c = WindowConfig::new(2.0, 5.0, 0.1, 1).unwrap();
        assert!(extract_snippets(&episode(10.0, 0.0), &c).is_err());
    }
}
