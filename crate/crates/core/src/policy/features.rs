//! Raw input encoding shared by training and inference.

use super::arch::{CTX_FEATURES, HIST_FEATURES};
use crate::domain::{AblationMode, ContextVector, Snippet, VehicleKinState};
use crate::error::{Error, Result};

/// Writes `[d_0, v_0, .., d_{n-1}, v_{n-1}, ctx...]` into `out`. Groups the
/// mode does not admit are encoded as zeros with a zero presence flag, and
/// are never read.
pub fn encode_input(
    mode: AblationMode,
    hist: &[VehicleKinState],
    tl_position: f64,
    ctx: &ContextVector,
    out: &mut [f64],
) -> Result<()> {
    if out.len() != hist.len() * HIST_FEATURES + CTX_FEATURES {
        return Err(Error::domain(format!(
            "input buffer of {} values cannot hold {} history steps",
            out.len(),
            hist.len()
        )));
    }
    for (k, x) in hist.iter().enumerate() {
        out[2 * k] = tl_position - x.s;
        out[2 * k + 1] = x.v;
    }
    encode_context(mode, ctx, &mut out[hist.len() * HIST_FEATURES..])
}

fn encode_context(mode: AblationMode, ctx: &ContextVector, out: &mut [f64]) -> Result<()> {
    out.fill(0.0);
    if mode.uses_fv() {
        if let Some(fv) = &ctx.fv {
            out[0] = 1.0;
            out[1] = fv.range;
            out[2] = fv.range_rate;
        }
    }
    if mode.uses_tl() {
        let tl = ctx
            .tl
            .as_ref()
            .ok_or_else(|| Error::domain(format!("mode {mode} needs the signal state")))?;
        out[3] = 1.0;
        out[4 + tl.phase.index()] = 1.0;
        out[7] = tl.timer;
    }
    let (sin, cos) = ctx.tod.cyclic();
    out[8] = sin;
    out[9] = cos;
    Ok(())
}

/// One teacher-forced training pair in raw encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: f64,
}

/// Expands each snippet into one pair per future step, sliding the history
/// window over the ground-truth states.
pub fn snippet_samples(snippets: &[Snippet], mode: AblationMode, n_tau: usize) -> Result<Vec<Sample>> {
    let width = n_tau * HIST_FEATURES + CTX_FEATURES;
    let mut out = Vec::new();
    let mut states = Vec::new();
    for sn in snippets {
        sn.validate(n_tau)?;
        states.clear();
        states.extend(sn.history.iter().map(|o| o.state));
        states.extend(sn.future.iter().map(|f| f.state));
        for (k, step) in sn.future.iter().enumerate() {
            let mut input = vec![0.0; width];
            encode_input(mode, &states[k..k + n_tau], sn.tl_position, &sn.future_contexts[k], &mut input)?;
            out.push(Sample {
                input,
                target: step.accel,
            });
        }
    }
    Ok(out)
}
