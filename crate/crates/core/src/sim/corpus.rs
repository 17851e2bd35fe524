//! On-disk episode corpus: a per-timestep CSV plus one JSON line of episode
//! metadata per episode.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::driver::DilemmaEvent;
use super::episode::{Episode, EpisodeSpec, Trace};
use crate::domain::{Phase, TlSignalState};
use crate::error::{Error, Result};

pub const CORPUS_FILE: &str = "corpus.csv";
pub const EPISODES_FILE: &str = "episodes.jsonl";

/// One timestep of one episode. FV columns are empty when there is no FV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub episode_id: u64,
    pub t: f64,
    pub s_hv: f64,
    pub v_hv: f64,
    pub a_hv: f64,
    pub s_fv: Option<f64>,
    pub v_fv: Option<f64>,
    pub phase: Phase,
    pub timer: f64,
    pub tod: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EpisodeMeta {
    spec: EpisodeSpec,
    dilemma: Option<DilemmaEvent>,
    smoothed: bool,
}

pub fn write_rows<W: Write>(out: W, episodes: &[Episode]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for ep in episodes {
        for k in 0..ep.len() {
            let row = CorpusRow {
                episode_id: ep.id(),
                t: ep.time(k),
                s_hv: ep.hv.s[k],
                v_hv: ep.hv.v[k],
                a_hv: ep.hv.a[k],
                s_fv: ep.fv.as_ref().map(|f| f.s[k]),
                v_fv: ep.fv.as_ref().map(|f| f.v[k]),
                phase: ep.tl[k].phase,
                timer: ep.tl[k].timer,
                tod: ep.tod_at(k),
            };
            w.serialize(row).map_err(|e| Error::domain(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::domain(e.to_string()))?;
    Ok(())
}

/// Writes `corpus.csv` and `episodes.jsonl` into `dir` (created if missing).
pub fn write_corpus(dir: &Path, episodes: &[Episode]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows_path = dir.join(CORPUS_FILE);
    let f = File::create(&rows_path).map_err(|e| Error::io(&rows_path, e))?;
    write_rows(BufWriter::new(f), episodes).map_err(|e| match e {
        Error::Domain(d) => Error::format(&rows_path, d),
        other => other,
    })?;

    let meta_path = dir.join(EPISODES_FILE);
    let f = File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut w = BufWriter::new(f);
    for ep in episodes {
        let meta = EpisodeMeta {
            spec: ep.spec.clone(),
            dilemma: ep.dilemma,
            smoothed: ep.smoothed,
        };
        let line = serde_json::to_string(&meta).map_err(|e| Error::format(&meta_path, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&meta_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

/// Reads a corpus written by [`write_corpus`]. FV accelerations are not part
/// of the row format and are rebuilt from speed differences.
pub fn read_corpus(dir: &Path) -> Result<Vec<Episode>> {
    let meta_path = dir.join(EPISODES_FILE);
    let f = File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut metas = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&meta_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: EpisodeMeta = serde_json::from_str(&line)
            .map_err(|e| Error::format(&meta_path, format!("line {}: {e}", i + 1)))?;
        metas.push(meta);
    }

    let rows_path = dir.join(CORPUS_FILE);
    let f = File::open(&rows_path).map_err(|e| Error::io(&rows_path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(f));
    let mut grouped: BTreeMap<u64, Vec<CorpusRow>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<CorpusRow>().enumerate() {
        let row = row.map_err(|e| Error::format(&rows_path, format!("record {}: {e}", i + 1)))?;
        grouped.entry(row.episode_id).or_default().push(row);
    }

    let mut episodes = Vec::with_capacity(metas.len());
    for meta in metas {
        let rows = grouped.remove(&meta.spec.id).ok_or_else(|| {
            Error::format(&rows_path, format!("no rows for episode {}", meta.spec.id))
        })?;
        episodes.push(assemble(meta, &rows).map_err(|d| Error::format(&rows_path, d))?);
    }
    if let Some(id) = grouped.keys().next() {
        return Err(Error::format(&rows_path, format!("rows for unknown episode {id}")));
    }
    Ok(episodes)
}

fn assemble(meta: EpisodeMeta, rows: &[CorpusRow]) -> std::result::Result<Episode, String> {
    let has_fv = rows.first().map(|r| r.s_fv.is_some()).unwrap_or(false);
    let mut hv = Trace::default();
    let mut fv = has_fv.then(Trace::default);
    let mut tl = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let expected = k as f64 * meta.spec.dt;
        if (r.t - expected).abs() > 1e-6 {
            return Err(format!("episode {} row {k}: time {} is off-grid", r.episode_id, r.t));
        }
        if r.v_hv < 0.0 || r.timer < 0.0 {
            return Err(format!("episode {} row {k}: negative speed or timer", r.episode_id));
        }
        hv.s.push(r.s_hv);
        hv.v.push(r.v_hv);
        hv.a.push(r.a_hv);
        match (&mut fv, r.s_fv, r.v_fv) {
            (Some(f), Some(s), Some(v)) => {
                f.s.push(s);
                f.v.push(v);
            }
            (None, None, None) => {}
            _ => return Err(format!("episode {} row {k}: inconsistent FV columns", r.episode_id)),
        }
        tl.push(TlSignalState {
            phase: r.phase,
            timer: r.timer,
        });
    }
    if let Some(f) = &mut fv {
        let dt = meta.spec.dt;
        f.a = f.v.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        let last = f.a.last().copied().unwrap_or(0.0);
        f.a.push(last);
    }
    Ok(Episode {
        spec: meta.spec,
        hv,
        fv,
        tl,
        dilemma: meta.dilemma,
        smoothed: meta.smoothed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generator::GeneratorConfig;
    use crate::sim::episode::simulate_episode;

    #[test]
    fn roundtrip() {
        let cfg = GeneratorConfig {
            fv_probability: 0.5,
            ..GeneratorConfig::default()
        };
        let eps: Vec<Episode> = (0..6)
            .map(|i| simulate_episode(&cfg.episode_spec(i)).unwrap())
            .collect();
        assert!(eps.iter().any(|e| e.fv.is_some()));
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &eps).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back.len(), eps.len());
        for (a, b) in eps.iter().zip(&back) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.hv, b.hv);
            assert_eq!(a.tl, b.tl);
            assert_eq!(a.dilemma, b.dilemma);
            assert_eq!(a.fv.as_ref().map(|f| &f.s), b.fv.as_ref().map(|f| &f.s));
        }
    }

    #[test]
    fn header_and_empty_fv_columns() {
        let cfg = GeneratorConfig {
            fv_probability: 0.0,
            duration: 1.0,
            ..GeneratorConfig::default()
        };
        let ep = simulate_episode(&cfg.episode_spec(0)).unwrap();
        let mut buf = Vec::new();
        write_rows(&mut buf, &[ep]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "episode_id,t,s_hv,v_hv,a_hv,s_fv,v_fv,phase,timer,tod"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 10);
        assert_eq!(first[5], "");
        assert_eq!(first[6], "");
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_corpus(dir.path()), Err(Error::Io { .. })));
    }
}
