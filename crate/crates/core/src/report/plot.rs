//! Declarative chart data. Nothing here renders; each chart is a list of
//! series plus enough labelling to redraw it with any plotting tool.

use serde::{Deserialize, Serialize};

use super::probing::{LevelAttention, ProbeResult};
use crate::error::{Error, Result};
use crate::eval::{MetricReport, Provenance, METRIC_NAMES};
use crate::probe::Arch;

/// The chance line drawn under every probe bar chart.
pub const PROBE_BASELINE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x: Vec<String>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_max: Option<Vec<f64>>,
}

impl PlotSeries {
    pub fn new(name: impl Into<String>, x: Vec<String>, y: Vec<f64>) -> Result<Self> {
        let s = PlotSeries {
            name: name.into(),
            x,
            y,
            err_min: None,
            err_max: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_error_bars(mut self, min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        self.err_min = Some(min);
        self.err_max = Some(max);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::invariant(
                "series",
                format!("`{}` has {} x values and {} y values", self.name, self.x.len(), self.y.len()),
            ));
        }
        match (&self.err_min, &self.err_max) {
            (None, None) => Ok(()),
            (Some(lo), Some(hi)) => {
                if lo.len() != self.y.len() || hi.len() != self.y.len() {
                    return Err(Error::invariant("series", format!("`{}` error bars have the wrong length", self.name)));
                }
                for i in 0..self.y.len() {
                    if !(lo[i] <= self.y[i] && self.y[i] <= hi[i]) {
                        return Err(Error::invariant(
                            "series",
                            format!("`{}` error bar [{}, {}] does not bracket {}", self.name, lo[i], hi[i], self.y[i]),
                        ));
                    }
                }
                Ok(())
            }
            _ => Err(Error::invariant("series", format!("`{}` has only one error bound", self.name))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Line,
    Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub id: String,
    pub kind: ChartKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Series drawn as a horizontal reference line rather than data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_series: Vec<String>,
    pub series: Vec<PlotSeries>,
    pub provenance: Provenance,
}

/// One line per metric per set, x = epoch.
pub fn trend_series(reports: &[MetricReport]) -> Result<Vec<PlotSeries>> {
    if reports.is_empty() {
        return Err(Error::validation("no reports to plot"));
    }
    let mut sets: Vec<_> = reports.iter().map(|r| r.set_name).collect();
    sets.sort();
    sets.dedup();
    let mut out = Vec::new();
    for set in sets {
        let mut rows: Vec<&MetricReport> = reports.iter().filter(|r| r.set_name == set).collect();
        rows.sort_by_key(|r| r.epoch);
        let x: Vec<String> = rows.iter().map(|r| r.epoch.to_string()).collect();
        for (m, name) in METRIC_NAMES.iter().enumerate() {
            let y = rows.iter().map(|r| r.scores().as_array()[m]).collect();
            out.push(PlotSeries::new(format!("{set}.{name}"), x.clone(), y)?);
        }
    }
    Ok(out)
}

/// Precision, recall and F1 bars per level for one architecture, plus the
/// constant 0.5 baseline.
pub fn probe_series(results: &[ProbeResult], arch: Arch) -> Result<Vec<PlotSeries>> {
    let mut rows: Vec<&ProbeResult> = results.iter().filter(|r| r.arch == arch && r.prf.is_some()).collect();
    if rows.is_empty() {
        return Err(Error::validation(format!("no {arch} probe results to plot")));
    }
    rows.sort_by_key(|r| r.level);
    let x: Vec<String> = rows.iter().map(|r| r.level.to_string()).collect();
    let pick = |f: fn(&crate::eval::Prf) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r.prf.as_ref().expect("filtered"))).collect() };
    Ok(vec![
        PlotSeries::new("precision", x.clone(), pick(|p| p.precision))?,
        PlotSeries::new("recall", x.clone(), pick(|p| p.recall))?,
        PlotSeries::new("f1", x.clone(), pick(|p| p.f1))?,
        PlotSeries::new("baseline", x.clone(), vec![PROBE_BASELINE; x.len()])?,
    ])
}

/// Mean attention score of target and non-target candidates per level, with
/// min/max error bars.
pub fn attention_series(levels: &[LevelAttention]) -> Result<Vec<PlotSeries>> {
    if levels.is_empty() {
        return Err(Error::validation("no attention analysis to plot"));
    }
    let mut rows: Vec<&LevelAttention> = levels.iter().collect();
    rows.sort_by_key(|r| r.level);
    let x: Vec<String> = rows.iter().map(|r| r.level.to_string()).collect();
    let group = |name: &str, target: bool| -> Result<PlotSeries> {
        let stats: Vec<_> = rows
            .iter()
            .map(|r| if target { r.summary.target } else { r.summary.non_target })
            .collect();
        PlotSeries::new(name, x.clone(), stats.iter().map(|s| s.avg).collect())?
            .with_error_bars(stats.iter().map(|s| s.min).collect(), stats.iter().map(|s| s.max).collect())
    };
    Ok(vec![group("target", true)?, group("non_target", false)?])
}
