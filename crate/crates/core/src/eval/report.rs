//! Set-level aggregation, per-epoch trends and format-adaptation deltas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{ItemScores, METRIC_NAMES};
use crate::corpus::write_atomic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub id: String,
    pub epoch: u32,
    pub run_index: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetName {
    Memory,
    Understanding,
}

impl fmt::Display for SetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetName::Memory => "memory",
            SetName::Understanding => "understanding",
        })
    }
}

impl std::str::FromStr for SetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory" => Ok(SetName::Memory),
            "understanding" => Ok(SetName::Understanding),
            other => Err(Error::validation(format!("unknown set `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Mean over items within each run, then mean over runs.
    #[default]
    ItemsThenRuns,
    /// One flat mean over every (run, item) score.
    Pooled,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "items-then-runs" | "items_then_runs" => Ok(Averaging::ItemsThenRuns),
            "pooled" => Ok(Averaging::Pooled),
            other => Err(Error::validation(format!("unknown averaging `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub set_name: SetName,
    pub epoch: u32,
    pub em: f64,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub n_items: usize,
    pub n_runs: usize,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl MetricReport {
    pub fn scores(&self) -> ItemScores {
        ItemScores {
            em: self.em,
            bleu1: self.bleu1,
            bleu4: self.bleu4,
            rouge1: self.rouge1,
            rouge2: self.rouge2,
            rouge_l: self.rouge_l,
        }
    }

    fn with_scores(set_name: SetName, epoch: u32, s: ItemScores, n_items: usize, n_runs: usize) -> Self {
        MetricReport {
            set_name,
            epoch,
            em: s.em,
            bleu1: s.bleu1,
            bleu4: s.bleu4,
            rouge1: s.rouge1,
            rouge2: s.rouge2,
            rouge_l: s.rouge_l,
            n_items,
            n_runs,
            averaging: Averaging::ItemsThenRuns,
            provenance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(Error::invariant("n_items", "must be > 0"));
        }
        for (name, v) in METRIC_NAMES.iter().zip(self.scores().as_array()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invariant(*name, format!("{v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

fn mean_scores(scores: &[ItemScores]) -> ItemScores {
    let mut acc = [0.0; 6];
    for s in scores {
        for (a, v) in acc.iter_mut().zip(s.as_array()) {
            *a += v;
        }
    }
    let n = scores.len() as f64;
    ItemScores::from_array(acc.map(|a| a / n))
}

/// Scores the completions of one epoch against gold targets.
///
/// Every run in `1..=expected_runs` (or `1..=max seen`) must be present and
/// every run must cover the same item ids. Items are reduced in id order so
/// the report is bitwise stable.
pub fn evaluate_set(
    completions: &[Completion],
    gold: &HashMap<String, String>,
    set_name: SetName,
    epoch: u32,
    expected_runs: Option<u32>,
    averaging: Averaging,
) -> Result<MetricReport> {
    let mut runs: BTreeMap<u32, BTreeMap<&str, &str>> = BTreeMap::new();
    for c in completions.iter().filter(|c| c.epoch == epoch) {
        if c.run_index == 0 {
            return Err(Error::validation(format!("{}: run_index is 1-based", c.id)));
        }
        if let Some(r) = expected_runs {
            if c.run_index > r {
                return Err(Error::validation(format!(
                    "{}: run_index {} exceeds configured run count {r}",
                    c.id, c.run_index
                )));
            }
        }
        if runs.entry(c.run_index).or_default().insert(&c.id, &c.text).is_some() {
            return Err(Error::validation(format!(
                "duplicate completion for {} in run {}",
                c.id, c.run_index
            )));
        }
    }
    if runs.is_empty() {
        return Err(Error::validation(format!("no completions for epoch {epoch}")));
    }

    let unresolved: BTreeSet<&str> = runs
        .values()
        .flat_map(|r| r.keys().copied())
        .filter(|id| !gold.contains_key(*id))
        .collect();
    if !unresolved.is_empty() {
        return Err(Error::NotFound(format!(
            "completion ids without gold target: {}",
            unresolved.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    let n_runs = expected_runs.unwrap_or_else(|| *runs.keys().last().expect("nonempty"));
    let missing: Vec<String> = (1..=n_runs)
        .filter(|r| !runs.contains_key(r))
        .map(|r| r.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!("missing runs: {}", missing.join(", "))));
    }

    let items: BTreeSet<&str> = runs.values().flat_map(|r| r.keys().copied()).collect();
    let mut gaps = Vec::new();
    for (r, texts) in &runs {
        gaps.extend(items.iter().filter(|id| !texts.contains_key(*id)).map(|id| format!("{id}@run{r}")));
    }
    if !gaps.is_empty() {
        return Err(Error::validation(format!("missing completions: {}", gaps.join(", "))));
    }

    let per_run: Vec<Vec<ItemScores>> = runs
        .values()
        .map(|texts| {
            texts
                .iter()
                .map(|(id, text)| ItemScores::score(text, &gold[*id]))
                .collect()
        })
        .collect();

    let overall = match averaging {
        Averaging::ItemsThenRuns => {
            let run_means: Vec<ItemScores> = per_run.iter().map(|s| mean_scores(s)).collect();
            mean_scores(&run_means)
        }
        Averaging::Pooled => mean_scores(&per_run.concat()),
    };
    let mut report = MetricReport::with_scores(set_name, epoch, overall, items.len(), runs.len());
    report.averaging = averaging;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub epoch: u32,
    pub memory: Option<ItemScores>,
    pub understanding: Option<ItemScores>,
}

pub const GAP_MARKER: &str = "NA";

/// One row per epoch, sorted; a set absent at an epoch is an explicit gap.
pub fn trend_table(reports: &[MetricReport]) -> Result<Vec<TrendRow>> {
    if reports.is_empty() {
        return Err(Error::validation("trend table needs at least one epoch"));
    }
    let mut rows: BTreeMap<u32, TrendRow> = BTreeMap::new();
    for r in reports {
        let row = rows.entry(r.epoch).or_insert(TrendRow {
            epoch: r.epoch,
            memory: None,
            understanding: None,
        });
        let slot = match r.set_name {
            SetName::Memory => &mut row.memory,
            SetName::Understanding => &mut row.understanding,
        };
        if slot.is_some() {
            return Err(Error::validation(format!(
                "duplicate report for set {} at epoch {}",
                r.set_name, r.epoch
            )));
        }
        *slot = Some(r.scores());
    }
    Ok(rows.into_values().collect())
}

pub fn trend_csv_header() -> Vec<String> {
    let mut cols = vec!["epoch".to_string()];
    for set in ["memory", "understanding"] {
        cols.extend(METRIC_NAMES.iter().map(|m| format!("{set}_{m}")));
    }
    cols
}

pub fn write_trend_csv(rows: &[TrendRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::validation(format!("csv: {e}"));
    w.write_record(trend_csv_header()).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.epoch.to_string()];
        for set in [&row.memory, &row.understanding] {
            match set {
                Some(s) => rec.extend(s.as_array().iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(GAP_MARKER.to_string(), 6)),
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

pub const REPORT_CSV_HEADER: [&str; 12] = [
    "set", "epoch", "em", "bleu1", "bleu4", "rouge1", "rouge2", "rougeL", "n_items", "n_runs",
    "config_hash", "seed",
];

/// Flat CSV: one row per (set, epoch), sorted by set then epoch.
pub fn write_reports_csv(reports: &[MetricReport], path: &Path) -> Result<()> {
    let mut sorted: Vec<&MetricReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (r.set_name, r.epoch));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::validation(format!("csv: {e}"));
    w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
    for r in sorted {
        let mut rec = vec![r.set_name.to_string(), r.epoch.to_string()];
        rec.extend(r.scores().as_array().iter().map(|v| v.to_string()));
        rec.push(r.n_items.to_string());
        rec.push(r.n_runs.to_string());
        match &r.provenance {
            Some(p) => {
                rec.push(p.config_hash.clone());
                rec.push(p.seed.to_string());
            }
            None => {
                rec.push(String::new());
                rec.push(String::new());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline: MetricReport,
    pub adapted: MetricReport,
    pub deltas: ItemScores,
}

pub fn delta_report(baseline: &MetricReport, adapted: &MetricReport) -> Result<DeltaReport> {
    if baseline.set_name != adapted.set_name {
        return Err(Error::validation(format!(
            "cannot compare set {} with set {}",
            baseline.set_name, adapted.set_name
        )));
    }
    let b = baseline.scores().as_array();
    let a = adapted.scores().as_array();
    let deltas = ItemScores::from_array(std::array::from_fn(|i| a[i] - b[i]));
    Ok(DeltaReport {
        baseline: baseline.clone(),
        adapted: adapted.clone(),
        deltas,
    })
}

impl DeltaReport {
    /// `"0.25 (+0.09)"`-style cells, one per metric, at `decimals` places.
    pub fn cells(&self, decimals: usize) -> Vec<String> {
        self.adapted
            .scores()
            .as_array()
            .iter()
            .zip(self.deltas.as_array())
            .map(|(v, d)| format!("{v:.decimals$} ({})", signed(d, decimals)))
            .collect()
    }
}

pub fn signed(v: f64, decimals: usize) -> String {
    let s = format!("{:.decimals$}", v.abs());
    let zero = s.chars().all(|c| c == '0' || c == '.');
    if v < 0.0 && !zero {
        format!("-{s}")
    } else {
        format!("+{s}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(id: &str, run: u32, text: &str) -> Completion {
        Completion {
            id: id.into(),
            epoch: 1,
            run_index: run,
            text: text.into(),
        }
    }

    fn gold() -> HashMap<String, String> {
        [("q1", "Paxton"), ("q2", "Helen")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn report(set: SetName, epoch: u32, v: f64) -> MetricReport {
        MetricReport::with_scores(set, epoch, ItemScores::from_array([v; 6]), 1, 1)
    }

    #[test]
    fn perfect_single_item() {
        let r = evaluate_set(
            &[comp("q1", 1, "Paxton")],
            &gold(),
            SetName::Understanding,
            1,
            None,
            Averaging::default(),
        )
        .unwrap();
        assert_eq!(r.scores().as_array(), [1.0; 6]);
        assert_eq!((r.n_items, r.n_runs), (1, 1));
    }

    #[test]
    fn two_runs_average_em() {
        let r = evaluate_set(
            &[comp("q1", 1, "Paxton"), comp("q1", 2, "Blake")],
            &gold(),
            SetName::Understanding,
            1,
            Some(2),
            Averaging::default(),
        )
        .unwrap();
        assert_eq!(r.em, 0.5);
    }

    #[test]
    fn unresolvable_and_missing_runs() {
        let g = gold();
        let err = evaluate_set(&[comp("zz", 1, "x")], &g, SetName::Memory, 1, None, Averaging::default());
        assert!(matches!(err, Err(Error::NotFound(_))));

        let err = evaluate_set(&[comp("q1", 1, "x"), comp("q1", 3, "x")], &g, SetName::Memory, 1, None, Averaging::default())
            .unwrap_err();
        assert!(err.to_string().contains("missing runs: 2"), "{err}");

        let err = evaluate_set(&[comp("q1", 1, "x")], &g, SetName::Memory, 1, Some(5), Averaging::default()).unwrap_err();
        assert!(err.to_string().contains("2, 3, 4, 5"), "{err}");
    }

    #[test]
    fn runs_must_cover_same_items() {
        let err = evaluate_set(
            &[comp("q1", 1, "x"), comp("q2", 1, "y"), comp("q1", 2, "x")],
            &gold(),
            SetName::Memory,
            1,
            None,
            Averaging::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("q2@run2"));
    }

    #[test]
    fn trend_rows_sorted_with_gaps() {
        let mut reports: Vec<_> = (1..=5).rev().map(|e| report(SetName::Memory, e, e as f64 / 10.0)).collect();
        reports.extend([1, 2, 4, 5].map(|e| report(SetName::Understanding, e, 0.1)));
        let rows = trend_table(&reports).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        assert!(rows[2].understanding.is_none());
        let col: Vec<f64> = rows.iter().map(|r| r.memory.unwrap().em).collect();
        assert!(col.windows(2).all(|w| w[0] <= w[1]));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trend.csv");
        write_trend_csv(&rows, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.lines().nth(3).unwrap().ends_with("NA,NA,NA,NA,NA,NA"));
    }

    #[test]
    fn duplicate_trend_rows_rejected() {
        let r = report(SetName::Memory, 1, 0.5);
        assert!(trend_table(&[r.clone(), r]).is_err());
        assert!(trend_table(&[]).is_err());
    }

    #[test]
    fn delta_cases() {
        let base = report(SetName::Understanding, 5, 0.3);
        let d = delta_report(&base, &base).unwrap();
        assert_eq!(d.deltas.as_array(), [0.0; 6]);

        let mut adapted = base.clone();
        adapted.em = 0.1;
        let d = delta_report(&base, &adapted).unwrap();
        assert!(d.deltas.em < 0.0);
        assert_eq!(d.cells(2)[0], "0.10 (-0.20)");

        let mem = report(SetName::Memory, 5, 0.3);
        assert!(delta_report(&base, &mem).is_err());
    }
}
