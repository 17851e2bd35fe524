//! Report files: the scenario x mode table, a structured dump and the
//! per-snippet ledger.

use std::fmt::Write as _;
use std::path::Path;

use super::ablation::{AblationReport, ReportRow};
use crate::domain::ScenarioLabel;
use crate::error::{Error, Result};

pub const TABLE_FILE: &str = "ablation_table.csv";
pub const REPORT_FILE: &str = "ablation_report.json";
pub const LEDGER_FILE: &str = "ablation_snippets.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Comma-delimited table.
    Table,
    /// JSON that parses back into the report.
    Structured,
}

const TABLE_HEADER: &str = "scenario,mode,count,pos_mae,pos_twae,pos_adn,spd_mae,spd_twae,spd_adn,\
pos_adn_q1,pos_adn_median,pos_adn_q3,pos_adn_whisker_lo,pos_adn_whisker_hi,pos_adn_outliers,\
spd_adn_q1,spd_adn_median,spd_adn_q3,spd_adn_whisker_lo,spd_adn_whisker_hi,spd_adn_outliers";

fn fmt_row(out: &mut String, row: &ReportRow) {
    let _ = write!(out, "{},{},{}", row.scenario, row.mode, row.count);
    match &row.mean {
        Some(m) => {
            for v in m.values() {
                let _ = write!(out, ",{v}");
            }
        }
        None => out.push_str(",,,,,,"),
    }
    for b in [&row.position_adn, &row.speed_adn] {
        match b {
            Some(b) => {
                let _ = write!(
                    out,
                    ",{},{},{},{},{},{}",
                    b.q1,
                    b.median,
                    b.q3,
                    b.whisker_lo,
                    b.whisker_hi,
                    b.outliers.len()
                );
            }
            None => out.push_str(",,,,,,"),
        }
    }
    out.push('\n');
}

pub fn render_table(report: &AblationReport) -> String {
    let mut out = String::from(
        "# means: per-snippet metrics averaged over snippets; scenario Y is short-horizon and \
         not a headline row\n",
    );
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for row in report.rows() {
        if row.scenario == ScenarioLabel::Y {
            out.push_str("# short-horizon: ");
        }
        fmt_row(&mut out, &row);
    }
    out
}

pub fn render_structured(report: &AblationReport) -> String {
    serde_json::to_string_pretty(report).expect("report always serializes")
}

pub fn parse_structured(text: &str) -> Result<AblationReport> {
    serde_json::from_str(text).map_err(|e| Error::format(REPORT_FILE, e.to_string()))
}

/// `snippet_id,scenario,mode,<six metrics>` per record.
pub fn render_ledger(report: &AblationReport) -> String {
    let mut out = String::from("snippet_id,scenario,mode,pos_mae,pos_twae,pos_adn,spd_mae,spd_twae,spd_adn\n");
    for r in &report.records {
        let _ = write!(out, "{},{},{}", r.snippet_id, r.scenario, r.mode);
        for v in r.metrics.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn emit_report(report: &AblationReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Table => render_table(report),
        ReportFormat::Structured => render_structured(report),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the table, the structured report and the ledger into `dir`.
pub fn emit_all(report: &AblationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    emit_report(report, ReportFormat::Table, &dir.join(TABLE_FILE))?;
    emit_report(report, ReportFormat::Structured, &dir.join(REPORT_FILE))?;
    let ledger = dir.join(LEDGER_FILE);
    std::fs::write(&ledger, render_ledger(report)).map_err(|e| Error::io(&ledger, e))
}
