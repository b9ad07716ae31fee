//! `scenecog`: corpus construction, evaluation, probing and reporting from
//! the command line. Errors map to exit codes 2 (validation), 3 (provider),
//! 4 (dependency) and 1 (I/O).

mod datagen;
mod eval;
mod probe;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use scenecog::corpus::{read_records, write_json, write_records, KnowledgeDescription, ScenarioQuestion};
use scenecog::report::{emit_report, parse_stages, Pipeline, ReportFormat, RunConfig};
use scenecog::sft::{build_sft_corpus, split_for_format_adaptation, GroupKey, Lexicon};
use scenecog::{Error, Result};

#[derive(Parser)]
#[command(name = "scenecog", version, about = "Scenario-cognition corpus, metrics and probing toolkit")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus construction stages and the manual review queue.
    Datagen {
        #[command(subcommand)]
        command: datagen::DatagenCmd,
    },
    /// SFT pair construction and the format-adaptation split.
    Prep {
        #[command(subcommand)]
        command: PrepCmd,
    },
    /// Output metrics, trends and adaptation deltas.
    Eval {
        #[command(subcommand)]
        command: eval::EvalCmd,
    },
    /// Hidden-state probes.
    Probe {
        #[command(subcommand)]
        command: probe::ProbeCmd,
    },
    /// Tables, CSV and plot data from a run's results.
    Report {
        #[command(subcommand)]
        command: ReportCmd,
    },
    /// Run pipeline stages in order.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated stage names, or `all`.
        #[arg(long, default_value = "all")]
        stages: String,
        /// Skip stages the cursor records as complete.
        #[arg(long)]
        resume: bool,
    },
}

#[derive(Subcommand)]
enum PrepCmd {
    /// Split every description at its first finite verb.
    Sft {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to list descriptions that could not be segmented.
        #[arg(long)]
        skipped: Option<PathBuf>,
    },
    /// Group-level split of the Understanding Set.
    Split {
        #[arg(long, default_value = "questions.jsonl")]
        questions: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        fraction: f64,
        #[arg(long, default_value = "knowledge")]
        group: GroupKey,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "split.json")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Write report files for the results in a run's work directory.
    Emit {
        #[arg(long)]
        config: PathBuf,
        /// `table`, `csv`, `plot-data`, or `all`.
        #[arg(long, default_value = "all")]
        format: String,
        /// Defaults to `reports/` under the work directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub(crate) fn load_pipeline(config: &Path) -> Result<Pipeline> {
    Pipeline::from_config(&RunConfig::load(config)?)
}

pub(crate) fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen { command } => datagen::run(command),
        Command::Prep { command } => prep(command),
        Command::Eval { command } => eval::run(command),
        Command::Probe { command } => probe::run(command),
        Command::Report { command } => report(command),
        Command::Run { config, stages, resume } => {
            let stages = parse_stages(&stages)?;
            let summary = load_pipeline(&config)?.run(&stages, resume)?;
            for s in &summary.skipped {
                println!("skipped {s}");
            }
            for s in &summary.ran {
                println!("ran {s}");
            }
            Ok(())
        }
    }
}

fn prep(command: PrepCmd) -> Result<()> {
    match command {
        PrepCmd::Sft { input, out, skipped } => {
            let descriptions: Vec<KnowledgeDescription> = read_records(&input)?;
            let corpus = build_sft_corpus(&descriptions, &Lexicon::builtin());
            if corpus.pairs.is_empty() {
                return Err(Error::validation("no description could be segmented"));
            }
            write_records(&corpus.pairs, &out)?;
            if let Some(p) = skipped {
                write_json(&corpus.skipped, &p)?;
            }
            println!(
                "{} pairs, {} skipped, lexicon {}",
                corpus.pairs.len(),
                corpus.skipped.len(),
                corpus.lexicon_version
            );
            Ok(())
        }
        PrepCmd::Split { questions, fraction, group, seed, out } => {
            let questions: Vec<ScenarioQuestion> = read_records(&questions)?;
            let split = split_for_format_adaptation(&questions, fraction, group, seed)?;
            write_json(&split, &out)?;
            println!(
                "{} format-train, {} held-out questions",
                split.train_question_ids.len(),
                split.eval_question_ids.len()
            );
            Ok(())
        }
    }
}

fn report(command: ReportCmd) -> Result<()> {
    let ReportCmd::Emit { config, format, out } = command;
    let formats = match format.as_str() {
        "all" => ReportFormat::ALL.to_vec(),
        f => vec![f.parse()?],
    };
    let pipeline = load_pipeline(&config)?;
    let bundle = pipeline.bundle()?;
    let dir = out.unwrap_or_else(|| pipeline.work_dir().join(scenecog::report::REPORTS_DIR));
    for f in formats {
        for p in emit_report(&bundle, f, &dir)? {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
