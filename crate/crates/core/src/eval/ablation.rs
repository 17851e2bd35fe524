//! Four-model ablation over a test set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{boxplot_stats, compute_metrics, BoxplotStats, MetricTriple};
use crate::domain::{AblationMode, ScenarioLabel, Snippet};
use crate::error::{Error, Result};
use crate::policy::ModelWeights;
use crate::rollout::{forecast_deterministic, ForecastInput, FvSource, SpatProvider};

/// Scenarios of the headline tables. `Y` windows are too short to compare
/// and are reported separately.
pub const HEADLINE: [ScenarioLabel; 6] = [
    ScenarioLabel::G,
    ScenarioLabel::R,
    ScenarioLabel::GY,
    ScenarioLabel::YR,
    ScenarioLabel::RG,
    ScenarioLabel::GYR,
];

/// One deterministic model per ablation mode.
#[derive(Debug, Clone)]
pub struct AblationModels {
    pub all: ModelWeights,
    pub nofv: ModelWeights,
    pub notl: ModelWeights,
    pub nofvtl: ModelWeights,
}

impl AblationModels {
    /// Sorts models by their mode; every mode must appear exactly once.
    pub fn from_models(models: Vec<ModelWeights>) -> Result<Self> {
        let mut slots: [Option<ModelWeights>; 4] = Default::default();
        for m in models {
            let i = m.mode.code() as usize;
            if slots[i].is_some() {
                return Err(Error::config(format!("two models for mode {}", m.mode)));
            }
            slots[i] = Some(m);
        }
        let mut take = |mode: AblationMode| {
            slots[mode.code() as usize]
                .take()
                .ok_or_else(|| Error::config(format!("missing model for mode {mode}")))
        };
        Ok(AblationModels {
            all: take(AblationMode::All)?,
            nofv: take(AblationMode::NoFV)?,
            notl: take(AblationMode::NoTL)?,
            nofvtl: take(AblationMode::NoFVTL)?,
        })
    }

    pub fn get(&self, mode: AblationMode) -> &ModelWeights {
        match mode {
            AblationMode::All => &self.all,
            AblationMode::NoFV => &self.nofv,
            AblationMode::NoTL => &self.notl,
            AblationMode::NoFVTL => &self.nofvtl,
        }
    }

    fn check(&self) -> Result<()> {
        for mode in AblationMode::ALL {
            let m = self.get(mode);
            if m.mode != mode || m.is_mixture() {
                return Err(Error::config(format!(
                    "slot {mode} needs a deterministic {mode} model, got {} ({})",
                    m.mode,
                    if m.is_mixture() { "mixture" } else { "deterministic" }
                )));
            }
        }
        Ok(())
    }
}

/// Metrics of one snippet under one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub snippet_id: String,
    pub episode_id: u64,
    pub origin_step: usize,
    pub horizon: usize,
    pub scenario: ScenarioLabel,
    pub mode: AblationMode,
    pub metrics: MetricTriple,
    pub warnings: usize,
}

impl SnippetRecord {
    fn key(&self) -> (ScenarioLabel, u8, u64, usize, usize) {
        (self.scenario, self.mode.code(), self.episode_id, self.origin_step, self.horizon)
    }
}

/// Aggregate of one scenario under one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: ScenarioLabel,
    pub mode: AblationMode,
    pub count: usize,
    pub mean: Option<MetricTriple>,
    pub position_adn: Option<BoxplotStats>,
    pub speed_adn: Option<BoxplotStats>,
}

/// Per-snippet records in canonical order; every aggregate is derived from
/// them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationReport {
    pub records: Vec<SnippetRecord>,
}

impl AblationReport {
    pub fn new(mut records: Vec<SnippetRecord>) -> Self {
        records.sort_by_key(|r| r.key());
        AblationReport { records }
    }

    /// Union of two shards.
    pub fn merge(self, other: AblationReport) -> AblationReport {
        let mut records = self.records;
        records.extend(other.records);
        AblationReport::new(records)
    }

    pub fn row(&self, scenario: ScenarioLabel, mode: AblationMode) -> ReportRow {
        let rs: Vec<&SnippetRecord> = self
            .records
            .iter()
            .filter(|r| r.scenario == scenario && r.mode == mode)
            .collect();
        let count = rs.len();
        if count == 0 {
            return ReportRow {
                scenario,
                mode,
                count,
                mean: None,
                position_adn: None,
                speed_adn: None,
            };
        }
        let mut sums = [0.0; 6];
        for r in &rs {
            for (s, v) in sums.iter_mut().zip(r.metrics.values()) {
                *s += v;
            }
        }
        let mean = MetricTriple::from_values(sums.map(|s| s / count as f64));
        let pos: Vec<f64> = rs.iter().map(|r| r.metrics.position.adn).collect();
        let spd: Vec<f64> = rs.iter().map(|r| r.metrics.speed.adn).collect();
        ReportRow {
            scenario,
            mode,
            count,
            mean: Some(mean),
            position_adn: boxplot_stats(&pos).ok(),
            speed_adn: boxplot_stats(&spd).ok(),
        }
    }

    /// Headline scenarios x modes, then `Y` rows if any `Y` snippet exists.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut scenarios = HEADLINE.to_vec();
        if self.records.iter().any(|r| r.scenario == ScenarioLabel::Y) {
            scenarios.push(ScenarioLabel::Y);
        }
        scenarios
            .into_iter()
            .flat_map(|s| AblationMode::ALL.map(|m| self.row(s, m)))
            .collect()
    }
}

/// Where each mode gets its context from, per the ablation protocol: `All`
/// forecasts the FV with the NoFV model, `NoTL` forecasts it with the NoFVTL
/// model (it may not see the signal), and NoTL/NoFVTL never read the signal.
fn sources<'a>(models: &'a AblationModels, mode: AblationMode, sn: &Snippet) -> (Option<SpatProvider>, FvSource<'a>) {
    let fv = |w: &'a ModelWeights| match FvSource::fv_history(sn) {
        Some(history) => FvSource::Forecast { weights: w, history },
        None => FvSource::None,
    };
    let spat = || SpatProvider::from_snippet(sn).ok();
    match mode {
        AblationMode::All => (spat(), fv(&models.nofv)),
        AblationMode::NoFV => (spat(), FvSource::None),
        AblationMode::NoTL => (None, fv(&models.nofvtl)),
        AblationMode::NoFVTL => (None, FvSource::None),
    }
}

/// Deterministic forecast of one snippet under one mode, scored against truth.
pub fn evaluate_snippet(models: &AblationModels, mode: AblationMode, sn: &Snippet) -> Result<SnippetRecord> {
    let (spat, fv) = sources(models, mode, sn);
    let input = ForecastInput::from_snippet(sn);
    let traj = forecast_deterministic(models.get(mode), &input, spat.as_ref(), &fv)?;
    Ok(SnippetRecord {
        snippet_id: sn.id(),
        episode_id: sn.episode_id,
        origin_step: sn.origin_step,
        horizon: sn.horizon_steps(),
        scenario: sn.scenario,
        mode,
        metrics: compute_metrics(&traj, &sn.future, sn.dt)?,
        warnings: traj.warnings.len(),
    })
}

/// Runs every mode on every snippet (Other-labeled snippets are skipped).
pub fn run_ablation(models: &AblationModels, testset: &[Snippet]) -> Result<AblationReport> {
    models.check()?;
    let jobs: Vec<(AblationMode, &Snippet)> = testset
        .iter()
        .filter(|s| s.scenario != ScenarioLabel::Other)
        .flat_map(|s| AblationMode::ALL.map(|m| (m, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|(m, s)| evaluate_snippet(models, *m, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport::new(records))
}
