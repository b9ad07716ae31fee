//! `datagen` subcommands. Each stage command runs the matching pipeline
//! stage against a config, with flags overriding the config's values.

use std::path::PathBuf;

use clap::Subcommand;

use scenecog::datagen::{ReviewQueue, ReviewStatus, REVIEW_FILE};
use scenecog::report::{Pipeline, RunConfig, Stage};
use scenecog::{Error, Result};

#[derive(Subcommand)]
pub enum DatagenCmd {
    /// Ask generator agents for candidate atomic facts.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Facts requested per agent.
        #[arg(long)]
        count: Option<usize>,
        /// Generator provider id; repeat for several agents.
        #[arg(long = "agent")]
        agents: Vec<String>,
    },
    /// Drop candidates too close to an already accepted fact.
    Filter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Unanimous validator vote over the filtered facts.
    Vote {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rewrite each accepted fact into k descriptions.
    Expand {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Element and argument spans for every fact.
    Annotate {
        #[arg(long)]
        config: PathBuf,
    },
    /// One cloze question per annotated pair.
    Questions {
        #[arg(long)]
        config: PathBuf,
    },
    /// Inspect or resolve the manual review queue.
    Review {
        #[command(subcommand)]
        command: ReviewCmd,
    },
}

#[derive(Subcommand)]
pub enum ReviewCmd {
    List {
        /// Work directory holding the review file.
        #[arg(long)]
        work: PathBuf,
        /// `pending`, `accepted`, `rejected` or `corrected`.
        #[arg(long)]
        status: Option<ReviewStatus>,
    },
    Resolve {
        #[arg(long)]
        work: PathBuf,
        item_id: String,
        /// `accept`, `reject` or `correct`.
        #[arg(long)]
        status: ReviewStatus,
        /// Replacement record as JSON; required with `correct`.
        #[arg(long)]
        payload: Option<String>,
    },
}

fn run_stage(config: PathBuf, stage: Stage, edit: impl FnOnce(&mut RunConfig)) -> Result<()> {
    let mut cfg = RunConfig::load(&config)?;
    edit(&mut cfg);
    Pipeline::from_config(&cfg)?.run(&[stage], false)?;
    println!("ran {stage}");
    Ok(())
}

pub fn run(command: DatagenCmd) -> Result<()> {
    match command {
        DatagenCmd::Generate { config, count, agents } => run_stage(config, Stage::Generate, |c| {
            if let Some(n) = count {
                c.generation.count_per_agent = n;
            }
            if !agents.is_empty() {
                c.generation.agents = agents;
            }
        }),
        DatagenCmd::Filter { config, threshold } => run_stage(config, Stage::Filter, |c| {
            if let Some(t) = threshold {
                c.filter.threshold = t;
            }
        }),
        DatagenCmd::Vote { config } => run_stage(config, Stage::Vote, |_| {}),
        DatagenCmd::Expand { config, k } => run_stage(config, Stage::Expand, |c| {
            if let Some(k) = k {
                c.expand.k = k;
            }
        }),
        DatagenCmd::Annotate { config } => run_stage(config, Stage::Annotate, |_| {}),
        DatagenCmd::Questions { config } => run_stage(config, Stage::Questions, |_| {}),
        DatagenCmd::Review { command } => review(command),
    }
}

fn review(command: ReviewCmd) -> Result<()> {
    match command {
        ReviewCmd::List { work, status } => {
            let queue = ReviewQueue::open(&work.join(REVIEW_FILE))?;
            for item in queue.list(status) {
                println!("{}", serde_json::to_string(item)?);
            }
            Ok(())
        }
        ReviewCmd::Resolve { work, item_id, status, payload } => {
            let path = work.join(REVIEW_FILE);
            if !path.exists() {
                return Err(Error::Dependency(format!("no review queue at {}", path.display())));
            }
            let mut queue = ReviewQueue::open(&path)?;
            let payload = payload.map(|p| serde_json::from_str(&p)).transpose()?;
            let item = queue.resolve(&item_id, status, payload)?;
            println!("{}", serde_json::to_string(item)?);
            Ok(())
        }
    }
}
