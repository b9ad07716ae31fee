//! `probe` subcommands. `build-pairs` reads the run's annotations and
//! archive; the other commands work on the files it and `train` write.

use std::path::PathBuf;

use clap::Subcommand;
use serde::{Deserialize, Serialize};

use scenecog::corpus::{read_json, write_json};
use scenecog::eval::{Prf, Provenance};
use scenecog::probe::{
    align_samples, attention_analysis, build_candidate_sets, build_pairs, evaluate_probe, layer_levels, mean_prf,
    split_data, top1_accuracy, train_probe, Arch, BalanceReport, CandidateMode, CandidateSet, EpochRecord,
    HiddenArchive, LevelKind, PairExample, ProbeMetrics, ProbeParams, SkippedSample, TrainConfig, TrainData,
};
use scenecog::report::{archive_depth, LevelAgg};
use scenecog::{Error, Result};

use crate::{load_pipeline, print_json};

#[derive(Subcommand)]
pub enum ProbeCmd {
    /// Pool element and argument states of one layer level into pairs.
    BuildPairs {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "mid")]
        level: LevelKind,
        /// Negatives per positive.
        #[arg(long, default_value_t = 1.13)]
        ratio: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// `mean` pools the level's layers; `per-layer-mean-metrics` keeps one set per layer.
        #[arg(long, default_value = "mean")]
        level_agg: LevelAgg,
        /// Attention candidates: `arguments` or `tokens`.
        #[arg(long = "candidates", default_value = "arguments")]
        candidate_mode: CandidateMode,
        #[arg(long, default_value = "pairs.json")]
        out: PathBuf,
    },
    /// Train one probe per pair set.
    Train {
        #[arg(long, default_value = "pairs.json")]
        pairs: PathBuf,
        #[arg(long)]
        arch: Arch,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Training share of the examples.
        #[arg(long)]
        split_fraction: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out metrics of trained probes.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "pairs.json")]
        pairs: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Attention scores of target versus non-target candidates.
    AttentionAnalysis {
        #[arg(long, default_value = "pairs.json")]
        pairs: PathBuf,
        /// Trained attention probe; identity parameters when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct PairSet {
    layers: Vec<u32>,
    balance: BalanceReport,
    pairs: Vec<PairExample>,
    candidates: Vec<CandidateSet>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairFile {
    provenance: Provenance,
    level: LevelKind,
    level_agg: LevelAgg,
    skipped: Vec<SkippedSample>,
    sets: Vec<PairSet>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainedRun {
    layers: Vec<u32>,
    params: ProbeParams,
    history: Vec<EpochRecord>,
    train_size: usize,
    heldout_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    provenance: Provenance,
    arch: Arch,
    level: LevelKind,
    level_agg: LevelAgg,
    config: TrainConfig,
    runs: Vec<TrainedRun>,
}

#[derive(Debug, Serialize)]
struct RunScore {
    layers: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<ProbeMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top1: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    arch: Arch,
    level: LevelKind,
    level_agg: LevelAgg,
    #[serde(skip_serializing_if = "Option::is_none")]
    prf: Option<Prf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top1: Option<f64>,
    runs: Vec<RunScore>,
}

fn data_for(arch: Arch, set: &PairSet) -> TrainData {
    match arch {
        Arch::Attention => TrainData::Candidates(set.candidates.clone()),
        _ => TrainData::Pairs(set.pairs.clone()),
    }
}

pub fn run(command: ProbeCmd) -> Result<()> {
    match command {
        ProbeCmd::BuildPairs { config, level, ratio, seed, level_agg, candidate_mode, out } => {
            let pipeline = load_pipeline(&config)?;
            let cfg = pipeline.config();
            let root = cfg
                .probe
                .archive
                .as_ref()
                .map(|p| cfg.resolve(p))
                .ok_or_else(|| Error::Dependency("probe.archive is not configured".into()))?;
            let archive = HiddenArchive::open(&root)?;
            let (samples, skipped) = align_samples(
                &archive,
                &pipeline.annotations()?,
                &pipeline.atomic()?,
                &pipeline.descriptions()?,
            );
            if samples.is_empty() {
                return Err(Error::validation("no archive sample aligns with an annotation"));
            }
            let num_layers = match cfg.probe.num_layers {
                Some(l) => l,
                None => archive_depth(&archive)?,
            };
            let level_layers = layer_levels(num_layers)?.get(level).layer_ids.to_vec();
            let layer_sets: Vec<Vec<u32>> = match level_agg {
                LevelAgg::Mean => vec![level_layers],
                LevelAgg::PerLayerMeanMetrics => level_layers.iter().map(|&l| vec![l]).collect(),
            };
            let seed = seed.unwrap_or(cfg.seed);
            let mut sets = Vec::new();
            for layers in layer_sets {
                let (pairs, balance) = build_pairs(&samples, &archive, &layers, ratio, seed)?;
                let (candidates, _) = build_candidate_sets(&samples, &archive, &layers, candidate_mode)?;
                println!(
                    "layers {layers:?}: {} positives, {} negatives, {} candidate sets",
                    balance.positives,
                    balance.negatives,
                    candidates.len()
                );
                sets.push(PairSet { layers, balance, pairs, candidates });
            }
            let provenance = Provenance { seed, ..pipeline.provenance().clone() };
            write_json(&PairFile { provenance, level, level_agg, skipped, sets }, &out)
        }
        ProbeCmd::Train { pairs, arch, epochs, lr, seed, batch_size, split_fraction, max_steps, out } => {
            let file: PairFile = read_json(&pairs)?;
            let mut config = TrainConfig { seed: file.provenance.seed, ..TrainConfig::default() };
            if let Some(v) = epochs {
                config.epochs = v;
            }
            if let Some(v) = lr {
                config.learning_rate = v;
            }
            if let Some(v) = seed {
                config.seed = v;
            }
            if let Some(v) = batch_size {
                config.batch_size = v;
            }
            if let Some(v) = split_fraction {
                config.split_fraction = v;
            }
            config.max_steps = max_steps;
            let mut runs = Vec::new();
            for set in &file.sets {
                let outcome = train_probe(&data_for(arch, set), arch, &config)?;
                if let Some(last) = outcome.history.last() {
                    println!("{arch} layers {:?}: train loss {:.6} after {} steps", set.layers, last.train_loss, last.steps);
                }
                runs.push(TrainedRun {
                    layers: set.layers.clone(),
                    params: outcome.params,
                    history: outcome.history,
                    train_size: outcome.train_size,
                    heldout_size: outcome.heldout_size,
                });
            }
            let out = out.unwrap_or_else(|| PathBuf::from(format!("params_{}.json", arch.name())));
            let provenance = Provenance { seed: config.seed, ..file.provenance };
            write_json(
                &ParamsFile { provenance, arch, level: file.level, level_agg: file.level_agg, config, runs },
                &out,
            )
        }
        ProbeCmd::Eval { params, pairs, threshold } => {
            let trained: ParamsFile = read_json(&params)?;
            let file: PairFile = read_json(&pairs)?;
            if trained.runs.len() != file.sets.len() {
                return Err(Error::validation(format!(
                    "{} trained runs but {} pair sets",
                    trained.runs.len(),
                    file.sets.len()
                )));
            }
            let threshold = threshold.unwrap_or(trained.config.threshold);
            let mut scores = Vec::new();
            for (run, set) in trained.runs.iter().zip(&file.sets) {
                let (_, heldout) = split_data(&data_for(trained.arch, set), &trained.config)?;
                let (metrics, top1) = match heldout {
                    TrainData::Pairs(p) => (Some(evaluate_probe(&run.params, &p, threshold)?), None),
                    TrainData::Candidates(c) => (None, Some(top1_accuracy(&run.params, &c)?)),
                };
                scores.push(RunScore { layers: run.layers.clone(), metrics, top1 });
            }
            let per_run: Vec<Prf> = scores.iter().filter_map(|s| s.metrics.as_ref().map(|m| m.prf())).collect();
            let tops: Vec<f64> = scores.iter().filter_map(|s| s.top1).collect();
            print_json(&EvalSummary {
                arch: trained.arch,
                level: trained.level,
                level_agg: trained.level_agg,
                prf: if per_run.is_empty() { None } else { Some(mean_prf(&per_run)?) },
                top1: (!tops.is_empty()).then(|| tops.iter().sum::<f64>() / tops.len() as f64),
                runs: scores,
            })
        }
        ProbeCmd::AttentionAnalysis { pairs, params } => {
            let file: PairFile = read_json(&pairs)?;
            let sets: Vec<CandidateSet> = file.sets.into_iter().flat_map(|s| s.candidates).collect();
            let d = sets
                .first()
                .map(|s| s.h_e.len())
                .ok_or_else(|| Error::validation("pair file holds no candidate sets"))?;
            let params = match params {
                Some(p) => {
                    let trained: ParamsFile = read_json(&p)?;
                    if trained.arch != Arch::Attention || trained.runs.len() != 1 {
                        return Err(Error::validation("expected one trained attention probe"));
                    }
                    trained.runs.into_iter().next().expect("checked length").params
                }
                None => ProbeParams::identity_attention(d),
            };
            print_json(&attention_analysis(&params, &sets)?)
        }
    }
}
