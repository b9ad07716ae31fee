//! Run configuration, stage orchestration and report emission.

mod config;
mod emit;
mod pipeline;
mod plot;
mod probing;

pub use config::*;
pub use emit::{emit_report, render_table, ReportBundle, ReportFormat};
pub use pipeline::*;
pub use plot::{attention_series, probe_series, trend_series, ChartKind, ChartSpec, PlotSeries, PROBE_BASELINE};
pub use probing::{archive_depth, run_probe_suite, LevelAttention, LevelBalance, ProbeResult, ProbeRunDetail, ProbeSuite};
