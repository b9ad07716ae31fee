//! The probe stage of a run: every configured architecture on every level.

use serde::{Deserialize, Serialize};

use super::config::{LevelAgg, ProbeSection};
use crate::error::{Error, Result};
use crate::eval::Prf;
use crate::probe::{
    attention_analysis, build_candidate_sets, build_pairs, layer_levels, mean_prf, Arch, AttentionSummary,
    BalanceReport, EpochRecord, HiddenArchive, LevelKind, ProbeMetrics, ProbeParams, ProbeSample, SkippedSample,
    TrainData, TrainOutcome, train_probe,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRunDetail {
    pub layers: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ProbeMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1: Option<f64>,
    pub train_size: usize,
    pub heldout_size: usize,
    pub history: Vec<EpochRecord>,
    /// Kept out of summaries; written to their own files.
    #[serde(skip)]
    pub params: Option<ProbeParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub arch: Arch,
    pub level: LevelKind,
    pub layers: Vec<u32>,
    /// Held-out precision/recall/F1 of the pair classifiers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prf: Option<Prf>,
    /// Held-out top-1 accuracy of the attention probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1: Option<f64>,
    pub runs: Vec<ProbeRunDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAttention {
    pub level: LevelKind,
    pub layers: Vec<u32>,
    /// False when the scores come from identity-initialized parameters.
    pub trained: bool,
    pub summary: AttentionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBalance {
    pub level: LevelKind,
    pub layers: Vec<u32>,
    pub balance: BalanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSuite {
    pub num_layers: u32,
    pub overlapping_levels: bool,
    pub level_agg: LevelAgg,
    pub skipped_alignment: Vec<SkippedSample>,
    pub balance: Vec<LevelBalance>,
    pub results: Vec<ProbeResult>,
    pub attention: Vec<LevelAttention>,
}

/// Highest layer id stored for any sample.
pub fn archive_depth(archive: &HiddenArchive) -> Result<u32> {
    archive
        .manifest()
        .values()
        .flat_map(|e| e.layer_ids.iter().copied())
        .max()
        .ok_or_else(|| Error::validation("archive holds no layers"))
}

fn final_metrics(out: &TrainOutcome) -> Result<(Option<ProbeMetrics>, Option<f64>)> {
    let last = out
        .history
        .last()
        .ok_or_else(|| Error::validation("training ran no epochs"))?;
    if last.heldout.is_none() && last.heldout_top1.is_none() {
        return Err(Error::validation("held-out split is empty; lower probe.train.split_fraction"));
    }
    Ok((last.heldout.clone(), last.heldout_top1))
}

/// Trains and scores every configured architecture on every configured level.
///
/// With [`LevelAgg::Mean`] a level is one probe on layer-averaged states.
/// With [`LevelAgg::PerLayerMeanMetrics`] each layer gets its own probe and
/// the level reports the mean of their metrics. Attention score statistics
/// always use the layer-averaged level, with the trained attention probe when
/// one exists for it and identity parameters otherwise.
pub fn run_probe_suite(
    archive: &HiddenArchive,
    samples: &[ProbeSample],
    skipped_alignment: Vec<SkippedSample>,
    section: &ProbeSection,
    seed: u64,
) -> Result<ProbeSuite> {
    let num_layers = match section.num_layers {
        Some(l) => l,
        None => archive_depth(archive)?,
    };
    let levels = layer_levels(num_layers)?;
    if levels.overlapping {
        log::warn!("levels share layers at l = {num_layers}");
    }
    let mut suite = ProbeSuite {
        num_layers,
        overlapping_levels: levels.overlapping,
        level_agg: section.level_agg,
        skipped_alignment,
        balance: Vec::new(),
        results: Vec::new(),
        attention: Vec::new(),
    };
    let d = archive.dim()?;

    for &kind in &section.levels {
        let level_layers = levels.get(kind).layer_ids.to_vec();
        let layer_sets: Vec<Vec<u32>> = match section.level_agg {
            LevelAgg::Mean => vec![level_layers.clone()],
            LevelAgg::PerLayerMeanMetrics => level_layers.iter().map(|&l| vec![l]).collect(),
        };
        let mut pair_data = Vec::new();
        if section.archs.iter().any(|a| *a != Arch::Attention) {
            for layers in &layer_sets {
                let (pairs, balance) = build_pairs(samples, archive, layers, section.train.negative_ratio, seed)?;
                suite.balance.push(LevelBalance {
                    level: kind,
                    layers: layers.clone(),
                    balance,
                });
                pair_data.push(TrainData::Pairs(pairs));
            }
        }

        let mut trained_attention: Option<ProbeParams> = None;
        for &arch in &section.archs {
            let mut runs = Vec::new();
            for (i, layers) in layer_sets.iter().enumerate() {
                let data = if arch == Arch::Attention {
                    let (sets, _) = build_candidate_sets(samples, archive, layers, section.candidate_mode)?;
                    TrainData::Candidates(sets)
                } else {
                    pair_data[i].clone()
                };
                log::info!("training {arch} probe on {kind} layers {layers:?}");
                let out = train_probe(&data, arch, &section.train)?;
                let (metrics, top1) = final_metrics(&out)?;
                if arch == Arch::Attention && section.level_agg == LevelAgg::Mean {
                    trained_attention = Some(out.params.clone());
                }
                runs.push(ProbeRunDetail {
                    layers: layers.clone(),
                    metrics,
                    top1,
                    train_size: out.train_size,
                    heldout_size: out.heldout_size,
                    history: out.history,
                    params: Some(out.params),
                });
            }
            let prf = if arch == Arch::Attention {
                None
            } else {
                let per_run: Vec<Prf> = runs.iter().filter_map(|r| r.metrics.as_ref().map(|m| m.prf())).collect();
                Some(mean_prf(&per_run)?)
            };
            let top1 = (arch == Arch::Attention)
                .then(|| runs.iter().filter_map(|r| r.top1).sum::<f64>() / runs.len() as f64);
            suite.results.push(ProbeResult {
                arch,
                level: kind,
                layers: level_layers.clone(),
                prf,
                top1,
                runs,
            });
        }

        let (sets, _) = build_candidate_sets(samples, archive, &level_layers, section.candidate_mode)?;
        let trained = trained_attention.is_some();
        let params = trained_attention.unwrap_or_else(|| ProbeParams::identity_attention(d));
        suite.attention.push(LevelAttention {
            level: kind,
            layers: level_layers,
            trained,
            summary: attention_analysis(&params, &sets)?,
        });
    }
    Ok(suite)
}
