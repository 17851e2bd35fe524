//! End-to-end plumbing: corpus generation, episode splits, training and
//! evaluation snippet sets.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Phase, ScenarioLabel, Snippet};
use crate::error::{Error, Result};
use crate::seeds::{derive_seed, splitmix64};
use crate::sim::{extract_snippets, simulate_episode, snippet_at, DilemmaEvent, Episode, GeneratorConfig, WindowConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Train/validation shares; the test split takes the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.70, val: 0.15 }
    }
}

impl SplitRatios {
    /// Assigns whole episodes, by a seeded hash of the episode id.
    pub fn split_of(&self, episode_id: u64, seed: u64) -> Split {
        let u = (splitmix64(derive_seed(seed, episode_id)) >> 11) as f64 / (1u64 << 53) as f64;
        if u < self.train {
            Split::Train
        } else if u < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train > 0.0 && self.val > 0.0 && self.train + self.val < 1.0) {
            return Err(Error::config("split ratios need train > 0, val > 0, train + val < 1"));
        }
        Ok(())
    }
}

/// Window geometry of training and evaluation snippets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub dt: f64,
    /// History length tau (s).
    pub history: f64,
    /// Prediction horizon for every scenario except GYR (s).
    pub horizon: f64,
    /// Prediction horizon for GYR (s).
    pub gyr_horizon: f64,
    /// Steps between evaluation windows.
    pub eval_stride: usize,
    /// Evaluation snippets kept per scenario (seeded choice); 0 keeps all.
    pub max_per_scenario: usize,
    /// Training snippets kept per scenario (seeded choice); 0 keeps all.
    pub train_per_scenario: usize,
    /// Forecast origins must have a distance to the stop bar inside
    /// `[lo, hi]` (m): the HV is on the approach, near the intersection.
    pub approach: [f64; 2],
    pub split: SplitRatios,
    pub split_seed: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            dt: 0.2,
            history: 2.0,
            horizon: 5.0,
            gyr_horizon: 15.0,
            eval_stride: 5,
            max_per_scenario: 600,
            train_per_scenario: 1500,
            approach: [0.0, 150.0],
            split: SplitRatios::default(),
            split_seed: 7,
        }
    }
}

impl Protocol {
    pub fn window(&self) -> Result<WindowConfig> {
        WindowConfig::new(self.history, self.horizon, self.dt, self.eval_stride)
    }

    pub fn gyr_window(&self) -> Result<WindowConfig> {
        WindowConfig::new(self.history, self.gyr_horizon, self.dt, self.eval_stride)
    }

    pub fn n_tau(&self) -> usize {
        (self.history / self.dt).round() as usize + 1
    }

    pub fn on_approach(&self, sn: &Snippet) -> bool {
        let d = sn.origin().state.distance_to(sn.tl_position);
        d >= self.approach[0] && d <= self.approach[1]
    }

    pub fn split_of(&self, episode_id: u64) -> Split {
        self.split.split_of(episode_id, self.split_seed)
    }

    pub fn select<'a>(&self, episodes: &'a [Episode], split: Split) -> Vec<&'a Episode> {
        episodes.iter().filter(|e| self.split_of(e.id()) == split).collect()
    }

    /// Non-overlapping windows (stride = horizon) on the approach, `Other`
    /// excluded, capped at `train_per_scenario` per label.
    pub fn training_snippets(&self, episodes: &[&Episode]) -> Result<Vec<Snippet>> {
        let w = self.window()?;
        let w = WindowConfig {
            stride: w.n_future(),
            ..w
        };
        let per: Vec<Vec<Snippet>> = episodes
            .par_iter()
            .map(|e| extract_snippets(e, &w))
            .collect::<Result<_>>()?;
        let all = per
            .into_iter()
            .flatten()
            .filter(|s| s.scenario != ScenarioLabel::Other && self.on_approach(s))
            .collect();
        Ok(cap_per_label(all, self.train_per_scenario, self.split_seed))
    }

    /// Every evaluation window on the approach: GYR from the long horizon, all
    /// other taxonomy labels from the short one. Sorted by (scenario, episode, origin).
    pub fn all_eval_snippets(&self, episodes: &[&Episode]) -> Result<Vec<Snippet>> {
        let (w, wg) = (self.window()?, self.gyr_window()?);
        let per: Vec<Vec<Snippet>> = episodes
            .par_iter()
            .map(|e| {
                let mut out: Vec<Snippet> = extract_snippets(e, &w)?
                    .into_iter()
                    .filter(|s| !matches!(s.scenario, ScenarioLabel::Other | ScenarioLabel::GYR))
                    .filter(|s| self.on_approach(s))
                    .collect();
                out.extend(
                    extract_snippets(e, &wg)?
                        .into_iter()
                        .filter(|s| s.scenario == ScenarioLabel::GYR && self.on_approach(s)),
                );
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut all: Vec<Snippet> = per.into_iter().flatten().collect();
        all.sort_by_key(|s| (s.scenario, s.episode_id, s.origin_step));
        Ok(all)
    }

    /// Evaluation windows capped at `max_per_scenario` per label.
    pub fn eval_snippets(&self, episodes: &[&Episode]) -> Result<Vec<Snippet>> {
        let all = self.all_eval_snippets(episodes)?;
        Ok(cap_per_label(all, self.max_per_scenario, self.split_seed))
    }

    /// Snippets whose origin is the yellow onset of an episode in which the
    /// HV met the yellow inside the dilemma band.
    pub fn dilemma_snippets(&self, episodes: &[&Episode]) -> Result<Vec<(Snippet, DilemmaEvent)>> {
        let (n_tau, n_fut) = (self.n_tau(), self.window()?.n_future());
        let mut out = Vec::new();
        for ep in episodes {
            let Some(ev) = ep.dilemma else { continue };
            let onset = (1..ep.len()).rev().find(|&k| {
                k <= ev.step && ep.tl[k].phase == Phase::Yellow && ep.tl[k - 1].phase != Phase::Yellow
            });
            let Some(origin) = onset else { continue };
            if origin + 1 < n_tau || origin + n_fut >= ep.len() {
                continue;
            }
            out.push((snippet_at(ep, origin, n_tau, n_fut)?, ev));
        }
        Ok(out)
    }
}

/// Seeded choice of at most `cap` snippets per label, ordered by
/// (label, episode, origin). `cap = 0` keeps everything.
fn cap_per_label(all: Vec<Snippet>, cap: usize, seed: u64) -> Vec<Snippet> {
    let mut by_label: BTreeMap<ScenarioLabel, Vec<Snippet>> = BTreeMap::new();
    for s in all {
        by_label.entry(s.scenario).or_default().push(s);
    }
    let mut out = Vec::new();
    for (_, mut group) in by_label {
        if cap > 0 {
            group.sort_by_key(|s| splitmix64(derive_seed(seed, s.episode_id) ^ s.origin_step as u64));
            group.truncate(cap);
        }
        group.sort_by_key(|s| (s.episode_id, s.origin_step));
        out.extend(group);
    }
    out
}

/// Simulates and observes (noise + smoothing) every episode of `cfg`.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Vec<Episode>> {
    cfg.validate()?;
    (0..cfg.episodes as u64)
        .into_par_iter()
        .map(|i| simulate_episode(&cfg.episode_spec(i))?.observed(&cfg.measurement))
        .collect()
}

/// Corpus summary written next to the episode files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub episodes: usize,
    pub dt: f64,
    /// Evaluation-window counts per scenario over the whole corpus (no cap).
    pub scenario_counts: BTreeMap<String, usize>,
    pub split_episodes: BTreeMap<String, usize>,
    pub dilemma_episodes: usize,
}

impl Manifest {
    pub fn build(cfg: &GeneratorConfig, protocol: &Protocol, episodes: &[Episode]) -> Result<Self> {
        let refs: Vec<&Episode> = episodes.iter().collect();
        let mut scenario_counts: BTreeMap<String, usize> =
            ScenarioLabel::TAXONOMY.iter().map(|l| (l.to_string(), 0)).collect();
        for s in protocol.all_eval_snippets(&refs)? {
            *scenario_counts.entry(s.scenario.to_string()).or_default() += 1;
        }
        let mut split_episodes = BTreeMap::new();
        for e in episodes {
            *split_episodes
                .entry(format!("{:?}", protocol.split_of(e.id())).to_lowercase())
                .or_default() += 1;
        }
        Ok(Manifest {
            seed: cfg.seed,
            config_hash: cfg.hash(),
            episodes: episodes.len(),
            dt: cfg.dt,
            scenario_counts,
            split_episodes,
            dilemma_episodes: episodes.iter().filter(|e| e.dilemma.is_some()).count(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest always serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_ratios_hold_roughly() {
        let r = SplitRatios::default();
        let mut counts = BTreeMap::new();
        for id in 0..10_000 {
            *counts.entry(r.split_of(id, 7)).or_insert(0usize) += 1;
        }
        assert!((6_700..7_300).contains(&counts[&Split::Train]));
        assert!((1_300..1_700).contains(&counts[&Split::Val]));
        assert_eq!(r.split_of(42, 7), r.split_of(42, 7));
    }

    #[test]
    fn training_windows_do_not_overlap() {
        let cfg = GeneratorConfig {
            episodes: 5,
            ..GeneratorConfig::default()
        };
        let eps = generate_corpus(&cfg).unwrap();
        let p = Protocol::default();
        let refs: Vec<&Episode> = eps.iter().collect();
        let sn = p.training_snippets(&refs).unwrap();
        for pair in sn.windows(2) {
            if pair[0].episode_id == pair[1].episode_id {
                assert!(pair[1].origin_step >= pair[0].origin_step + 25);
            }
        }
        assert!(sn.iter().all(|s| s.scenario != ScenarioLabel::Other));
    }
}
