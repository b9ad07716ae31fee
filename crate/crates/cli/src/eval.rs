//! `eval` subcommands over completion and report files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Subcommand;
use serde_json::Value;

use scenecog::corpus::{read_json, read_jsonl, write_json};
use scenecog::eval::{
    delta_report, evaluate_set, trend_table, write_reports_csv, write_trend_csv, Averaging, Completion, MetricReport,
    SetName,
};
use scenecog::{Error, Result};

use crate::print_json;

#[derive(Subcommand)]
pub enum EvalCmd {
    /// Score one epoch of completions against gold answers.
    Outputs {
        /// JSONL of `{id, epoch, run_index, text}`.
        #[arg(long)]
        completions: PathBuf,
        /// SFT pair file (memory) or question file (understanding).
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        set: SetName,
        #[arg(long)]
        epoch: u32,
        /// Reject completions with a larger run index.
        #[arg(long)]
        runs: Option<u32>,
        #[arg(long, default_value = "items-then-runs")]
        averaging: Averaging,
        /// Write the report here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-epoch trend table from a directory of report files.
    Trend {
        #[arg(long)]
        reports: PathBuf,
        /// Defaults to `trend.csv` inside the reports directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gain of an adapted report over its baseline.
    Delta {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        adapted: PathBuf,
        /// Decimal places in the printed cells.
        #[arg(long, default_value_t = 2)]
        decimals: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `id -> reference` from either SFT pairs or questions.
fn load_gold(path: &Path) -> Result<HashMap<String, String>> {
    let rows: Vec<Value> = read_jsonl(path)?;
    let mut gold = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        let field = |k: &str| row.get(k).and_then(Value::as_str);
        let (id, text) = match (field("source_description_id"), field("target"), field("id"), field("answer")) {
            (Some(id), Some(t), _, _) => (id, t),
            (_, _, Some(id), Some(a)) => (id, a),
            _ => {
                return Err(Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected {source_description_id, target} or {id, answer}".into(),
                })
            }
        };
        gold.insert(id.to_string(), text.to_string());
    }
    Ok(gold)
}

/// A single report or a list of them.
fn load_reports(path: &Path) -> Result<Vec<MetricReport>> {
    match read_json::<Value>(path)? {
        v @ Value::Array(_) => Ok(serde_json::from_value(v)?),
        v => Ok(vec![serde_json::from_value(v)?]),
    }
}

fn last_report(path: &Path) -> Result<MetricReport> {
    load_reports(path)?
        .into_iter()
        .max_by_key(|r| r.epoch)
        .ok_or_else(|| Error::validation(format!("{}: no reports", path.display())))
}

pub fn run(command: EvalCmd) -> Result<()> {
    match command {
        EvalCmd::Outputs { completions, gold, set, epoch, runs, averaging, out } => {
            let gold = load_gold(&gold)?;
            let completions: Vec<Completion> = read_jsonl(&completions)?;
            let report = evaluate_set(&completions, &gold, set, epoch, runs, averaging)?;
            match out {
                Some(p) => write_json(&report, &p),
                None => print_json(&report),
            }
        }
        EvalCmd::Trend { reports, out } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&reports)
                .map_err(|e| Error::io(reports.display().to_string(), e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            let mut all = Vec::new();
            for f in &files {
                all.extend(load_reports(f)?);
            }
            let out = out.unwrap_or_else(|| reports.join("trend.csv"));
            write_trend_csv(&trend_table(&all)?, &out)?;
            write_reports_csv(&all, &out.with_file_name("metrics.csv"))?;
            println!("{} reports from {} files -> {}", all.len(), files.len(), out.display());
            Ok(())
        }
        EvalCmd::Delta { baseline, adapted, decimals, out } => {
            let delta = delta_report(&last_report(&baseline)?, &last_report(&adapted)?)?;
            println!("{}", delta.cells(decimals).join(" | "));
            if let Some(p) = out {
                write_json(&delta, &p)?;
            }
            Ok(())
        }
    }
}
