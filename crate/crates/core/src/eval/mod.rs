//! Error metrics, the ablation harness and report files.

pub mod ablation;
pub mod metrics;
pub mod report;

pub use ablation::{evaluate_snippet, run_ablation, AblationModels, AblationReport, ReportRow, SnippetRecord, HEADLINE};
pub use metrics::{boxplot_stats, compute_metrics, error_metrics, BoxplotStats, ErrorMetrics, MetricTriple};
pub use report::{emit_all, emit_report, parse_structured, render_ledger, render_structured, render_table, ReportFormat};
