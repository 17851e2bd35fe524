//! Plot-ready forecast files.

use std::fmt::Write as _;
use std::path::Path;

use super::density::Density;
use super::forecast::ForecastTrajectory;
use crate::domain::AblationMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastHeader {
    pub seed: u64,
    pub mode: AblationMode,
    pub samples: usize,
    pub dt: f64,
}

/// Comment header, then `rollout_id,step,t,s,v,a,step_log_density` rows.
/// The density column is empty for deterministic forecasts.
pub fn render_forecast(header: &ForecastHeader, runs: &[ForecastTrajectory]) -> String {
    let mut out = format!(
        "# seed={} mode={} samples={} dt={}\nrollout_id,step,t,s,v,a,step_log_density\n",
        header.seed, header.mode, header.samples, header.dt
    );
    for (id, run) in runs.iter().enumerate() {
        for w in &run.warnings {
            let _ = writeln!(out, "# warning rollout {id}: {w}");
        }
        for (k, (x, a)) in run.states.iter().zip(&run.accels).enumerate() {
            let step = k + 1;
            let lp = run
                .log_densities
                .as_ref()
                .map(|l| l[k].to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{id},{step},{},{},{},{a},{lp}",
                step as f64 * header.dt,
                x.s,
                x.v
            );
        }
    }
    out
}

pub fn write_forecast(path: &Path, header: &ForecastHeader, runs: &[ForecastTrajectory]) -> Result<()> {
    std::fs::write(path, render_forecast(header, runs)).map_err(|e| Error::io(path, e))
}

/// One marginal per step: `step,t,variable,x,density` rows (`x` only with
/// an empty density for point masses).
pub fn render_densities(dt: f64, variable: &str, grids: &[(Vec<f64>, Density)]) -> String {
    let mut out = String::from("step,t,variable,x,density\n");
    for (k, (grid, d)) in grids.iter().enumerate() {
        let step = k + 1;
        let t = step as f64 * dt;
        match d {
            Density::Values { values, .. } => {
                for (x, p) in grid.iter().zip(values) {
                    let _ = writeln!(out, "{step},{t},{variable},{x},{p}");
                }
            }
            Density::PointMass(x) => {
                let _ = writeln!(out, "{step},{t},{variable},{x},");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VehicleKinState;

    #[test]
    fn rows_and_header() {
        let run = ForecastTrajectory {
            states: vec![VehicleKinState { s: 2.0, v: 10.0 }, VehicleKinState { s: 4.0, v: 10.0 }],
            accels: vec![0.0, 0.0],
            log_densities: None,
            warnings: vec![],
        };
        let h = ForecastHeader {
            seed: 3,
            mode: AblationMode::NoFV,
            samples: 1,
            dt: 0.2,
        };
        let text = render_forecast(&h, &[run]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=3 mode=nofv samples=1 dt=0.2");
        assert_eq!(lines[2], "0,1,0.2,2,10,0,");
        assert_eq!(lines.len(), 4);
    }
}
