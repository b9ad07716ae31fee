//! Report files: a readable table, flat CSVs, and plot data.
//!
//! CSV column orders are fixed:
//!
//! * `metrics.csv`: `set,epoch,em,bleu1,bleu4,rouge1,rouge2,rougeL,n_items,n_runs,config_hash,seed`
//! * `delta.csv`: `set,epoch,metric,baseline,adapted,delta,config_hash,seed`
//! * `probe.csv`: `arch,level,layers,precision,recall,f1,top1,config_hash,seed`
//! * `attention.csv`: `level,layers,trained,group,avg,min,max,n,config_hash,seed`
//! * plot data `<chart>.csv`: `series,x,y,err_min,err_max,config_hash,seed`

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::{attention_series, probe_series, trend_series, ChartKind, ChartSpec, PlotSeries};
use super::probing::ProbeSuite;
use crate::corpus::{write_atomic, write_json};
use crate::error::{Error, Result};
use crate::eval::{write_reports_csv, DeltaReport, MetricReport, Provenance, METRIC_NAMES};
use crate::probe::Arch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Table,
    Csv,
    PlotData,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Table, ReportFormat::Csv, ReportFormat::PlotData];
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "plot-data" | "plot_data" => Ok(ReportFormat::PlotData),
            other => Err(Error::validation(format!("unknown report format `{other}`"))),
        }
    }
}

/// Everything a report can show. Any part may be missing, but not all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    #[serde(default)]
    pub reports: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSuite>,
}

impl ReportBundle {
    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
            && self.delta.is_none()
            && self.probe.as_ref().is_none_or(|p| p.results.is_empty() && p.attention.is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::validation("nothing to report"));
        }
        for r in &self.reports {
            r.validate()?;
        }
        if let Some(d) = &self.delta {
            d.baseline.validate()?;
            d.adapted.validate()?;
        }
        Ok(())
    }

    fn pair_archs(&self) -> Vec<Arch> {
        let Some(p) = &self.probe else { return Vec::new() };
        Arch::ALL
            .into_iter()
            .filter(|a| p.results.iter().any(|r| r.arch == *a && r.prf.is_some()))
            .collect()
    }

    pub fn charts(&self) -> Result<Vec<ChartSpec>> {
        let chart = |id: String, kind, title: String, x: &str, y: &str, series: Vec<PlotSeries>| ChartSpec {
            reference_series: if series.iter().any(|s| s.name == "baseline") {
                vec!["baseline".into()]
            } else {
                Vec::new()
            },
            id,
            kind,
            title,
            x_label: x.into(),
            y_label: y.into(),
            series,
            provenance: self.provenance.clone(),
        };
        let mut out = Vec::new();
        if !self.reports.is_empty() {
            out.push(chart(
                "trend".into(),
                ChartKind::Line,
                "Metric trend over training epochs".into(),
                "epoch",
                "score",
                trend_series(&self.reports)?,
            ));
        }
        if let Some(p) = &self.probe {
            for arch in self.pair_archs() {
                out.push(chart(
                    format!("probe_{}", arch.name()),
                    ChartKind::Bar,
                    format!("{arch} probe by layer level"),
                    "level",
                    "score",
                    probe_series(&p.results, arch)?,
                ));
            }
            if !p.attention.is_empty() {
                out.push(chart(
                    "attention".into(),
                    ChartKind::Bar,
                    "Attention scores of target and non-target pairs".into(),
                    "level",
                    "attention score",
                    attention_series(&p.attention)?,
                ));
            }
        }
        Ok(out)
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>, path: &Path) -> Result<()> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::validation(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

fn csv_err(e: csv::Error) -> Error {
    Error::validation(format!("csv: {e}"))
}

fn layers_label(layers: &[u32]) -> String {
    layers.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `bundle` in `format` under `out_dir` and returns the files written.
pub fn emit_report(bundle: &ReportBundle, format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    bundle.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    match format {
        ReportFormat::Table => {
            let path = out_dir.join("report.md");
            write_atomic(&path, render_table(bundle).as_bytes())?;
            Ok(vec![path])
        }
        ReportFormat::Csv => emit_csv(bundle, out_dir),
        ReportFormat::PlotData => {
            let mut written = Vec::new();
            for chart in bundle.charts()? {
                let spec = out_dir.join(format!("{}.chart.json", chart.id));
                write_json(&chart, &spec)?;
                let data = out_dir.join(format!("{}.csv", chart.id));
                let mut w = csv_writer();
                w.write_record(["series", "x", "y", "err_min", "err_max", "config_hash", "seed"])
                    .map_err(csv_err)?;
                for s in &chart.series {
                    for i in 0..s.x.len() {
                        let seed = bundle.provenance.seed.to_string();
                        w.write_record([
                            s.name.as_str(),
                            &s.x[i],
                            &s.y[i].to_string(),
                            &opt(s.err_min.as_ref().map(|v| v[i])),
                            &opt(s.err_max.as_ref().map(|v| v[i])),
                            &bundle.provenance.config_hash,
                            &seed,
                        ])
                        .map_err(csv_err)?;
                    }
                }
                finish_csv(w, &data)?;
                written.extend([spec, data]);
            }
            Ok(written)
        }
    }
}

fn emit_csv(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let hash = bundle.provenance.config_hash.as_str();
    let seed = bundle.provenance.seed.to_string();
    let mut written = Vec::new();
    if !bundle.reports.is_empty() {
        let path = out_dir.join("metrics.csv");
        let stamped: Vec<MetricReport> = bundle
            .reports
            .iter()
            .map(|r| MetricReport {
                provenance: Some(bundle.provenance.clone()),
                ..r.clone()
            })
            .collect();
        write_reports_csv(&stamped, &path)?;
        written.push(path);
    }
    if let Some(d) = &bundle.delta {
        let path = out_dir.join("delta.csv");
        let mut w = csv_writer();
        w.write_record(["set", "epoch", "metric", "baseline", "adapted", "delta", "config_hash", "seed"])
            .map_err(csv_err)?;
        let (b, a, delta) = (d.baseline.scores().as_array(), d.adapted.scores().as_array(), d.deltas.as_array());
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            w.write_record([
                &d.adapted.set_name.to_string(),
                &d.adapted.epoch.to_string(),
                *name,
                &b[i].to_string(),
                &a[i].to_string(),
                &delta[i].to_string(),
                hash,
                &seed,
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w, &path)?;
        written.push(path);
    }
    if let Some(p) = &bundle.probe {
        let path = out_dir.join("probe.csv");
        let mut w = csv_writer();
        w.write_record(["arch", "level", "layers", "precision", "recall", "f1", "top1", "config_hash", "seed"])
            .map_err(csv_err)?;
        for r in &p.results {
            w.write_record([
                r.arch.name(),
                &r.level.to_string(),
                &layers_label(&r.layers),
                &opt(r.prf.map(|x| x.precision)),
                &opt(r.prf.map(|x| x.recall)),
                &opt(r.prf.map(|x| x.f1)),
                &opt(r.top1),
                hash,
                &seed,
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w, &path)?;
        written.push(path);

        let path = out_dir.join("attention.csv");
        let mut w = csv_writer();
        w.write_record(["level", "layers", "trained", "group", "avg", "min", "max", "n", "config_hash", "seed"])
            .map_err(csv_err)?;
        for a in &p.attention {
            for (group, s) in [("target", a.summary.target), ("non_target", a.summary.non_target)] {
                w.write_record([
                    &a.level.to_string(),
                    &layers_label(&a.layers),
                    &a.trained.to_string(),
                    group,
                    &s.avg.to_string(),
                    &s.min.to_string(),
                    &s.max.to_string(),
                    &s.n.to_string(),
                    hash,
                    &seed,
                ])
                .map_err(csv_err)?;
            }
        }
        finish_csv(w, &path)?;
        written.push(path);
    }
    Ok(written)
}

const HEADS: [&str; 6] = ["EM", "BLEU-1", "BLEU-4", "ROUGE-1", "ROUGE-2", "ROUGE-L"];

pub fn render_table(bundle: &ReportBundle) -> String {
    let mut s = String::new();
    let p = &bundle.provenance;
    let _ = writeln!(s, "# Run report\n\nconfig_hash: `{}`  seed: {}\n", p.config_hash, p.seed);

    if !bundle.reports.is_empty() {
        let _ = writeln!(s, "## Metrics by epoch\n\n| Set | Epoch | {} |", HEADS.join(" | "));
        let _ = writeln!(s, "|---|---|{}", "---|".repeat(HEADS.len()));
        let mut rows: Vec<&MetricReport> = bundle.reports.iter().collect();
        rows.sort_by_key(|r| (r.set_name, r.epoch));
        for r in rows {
            let cells: Vec<String> = r.scores().as_array().iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(s, "| {} | {} | {} |", r.set_name, r.epoch, cells.join(" | "));
        }
        s.push('\n');
    }

    if let Some(d) = &bundle.delta {
        let _ = writeln!(s, "## Format adaptation (epoch {})\n\n| | {} |", d.adapted.epoch, HEADS.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(HEADS.len()));
        let base: Vec<String> = d.baseline.scores().as_array().iter().map(|v| format!("{v:.2}")).collect();
        let _ = writeln!(s, "| baseline | {} |", base.join(" | "));
        let _ = writeln!(s, "| adapted | {} |", d.cells(2).join(" | "));
        s.push('\n');
    }

    if let Some(pr) = &bundle.probe {
        let _ = writeln!(
            s,
            "## Probes (l = {}, {:?})\n\n| Arch | Level | Layers | Precision | Recall | F1 | Top-1 |\n|---|---|---|---|---|---|---|",
            pr.num_layers, pr.level_agg
        );
        let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        for r in &pr.results {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                r.arch,
                r.level,
                layers_label(&r.layers),
                f(r.prf.map(|x| x.precision)),
                f(r.prf.map(|x| x.recall)),
                f(r.prf.map(|x| x.f1)),
                f(r.top1)
            );
        }
        if !pr.attention.is_empty() {
            let _ = writeln!(
                s,
                "\n## Attention scores\n\n| Level | Trained | Target avg [min, max] | Non-target avg [min, max] |\n|---|---|---|---|"
            );
            for a in &pr.attention {
                let t = a.summary.target;
                let n = a.summary.non_target;
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4} [{:.4}, {:.4}] | {:.4} [{:.4}, {:.4}] |",
                    a.level, a.trained, t.avg, t.min, t.max, n.avg, n.min, n.max
                );
            }
        }
        s.push('\n');
    }
    s
}
