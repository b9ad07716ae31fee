//! Seeded mini-batch gradient descent for the probes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_probe, top1_accuracy, ProbeMetrics};
use super::model::{loss_and_gradients, Arch, ProbeBatch, ProbeParams};
use super::pairs::{CandidateSet, PairExample};
use crate::error::{Error, Result};
use crate::sft::train_group_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub split_fraction: f64,
    pub negative_ratio: f64,
    /// Stop after this many parameter updates, even mid-epoch.
    pub max_steps: Option<usize>,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            learning_rate: 1e-3,
            seed: 0,
            batch_size: 32,
            split_fraction: 0.7,
            negative_ratio: 1.13,
            max_steps: None,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::validation("split_fraction must be in (0, 1)"));
        }
        if !(self.negative_ratio > 0.0 && self.negative_ratio.is_finite()) {
            return Err(Error::validation("negative_ratio must be > 0"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Examples for one probe family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainData {
    Pairs(Vec<PairExample>),
    Candidates(Vec<CandidateSet>),
}

impl TrainData {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Pairs(p) => p.len(),
            TrainData::Candidates(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dim(&self) -> Option<usize> {
        match self {
            TrainData::Pairs(p) => p.first().map(|p| p.h_e.len()),
            TrainData::Candidates(c) => c.first().map(|c| c.h_e.len()),
        }
    }

    fn select(&self, idx: &[usize]) -> TrainData {
        match self {
            TrainData::Pairs(p) => TrainData::Pairs(idx.iter().map(|&i| p[i].clone()).collect()),
            TrainData::Candidates(c) => TrainData::Candidates(idx.iter().map(|&i| c[i].clone()).collect()),
        }
    }

    fn batch(&self) -> ProbeBatch<'_> {
        match self {
            TrainData::Pairs(p) => ProbeBatch::Pairs(p),
            TrainData::Candidates(c) => ProbeBatch::Candidates(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Parameter updates taken so far.
    pub steps: usize,
    /// Mean loss over the full training set at the end of the epoch.
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout: Option<ProbeMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout_top1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: ProbeParams,
    pub history: Vec<EpochRecord>,
    pub train_size: usize,
    pub heldout_size: usize,
}

/// Seeded split of `data` into training and held-out parts, each kept in
/// input order. `train_probe` trains on exactly this split.
pub fn split_data(data: &TrainData, config: &TrainConfig) -> Result<(TrainData, TrainData)> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::validation("need at least two examples to split"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_train = train_group_count(config.split_fraction, order.len());
    let (train_idx, held_idx) = order.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let mut held_idx = held_idx.to_vec();
    train_idx.sort_unstable();
    held_idx.sort_unstable();
    Ok((data.select(&train_idx), data.select(&held_idx)))
}

pub fn train_probe(data: &TrainData, arch: Arch, config: &TrainConfig) -> Result<TrainOutcome> {
    let (train, heldout) = split_data(data, config)?;
    train_on(&train, &heldout, arch, config)
}

/// Trains from seeded initial parameters on `train`, scoring `heldout` after
/// every epoch.
pub fn train_on(train: &TrainData, heldout: &TrainData, arch: Arch, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let d = train.dim().ok_or_else(|| Error::validation("empty training set"))?;
    match (train, arch) {
        (TrainData::Pairs(p), Arch::Linear | Arch::SimMlp | Arch::EnhMlp) => {
            let positives = p.iter().filter(|x| x.label == 1).count();
            if positives == 0 || positives == p.len() {
                return Err(Error::validation("training set contains a single class"));
            }
        }
        (TrainData::Candidates(_), Arch::Attention) => {}
        _ => return Err(Error::validation(format!("{arch} probe cannot train on this data"))),
    }

    let mut params = ProbeParams::init(arch, d, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut steps = 0usize;
    let mut history = Vec::with_capacity(config.epochs);
    let budget = config.max_steps.unwrap_or(usize::MAX);

    for epoch in 1..=config.epochs {
        if steps >= budget {
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if steps >= budget {
                break;
            }
            let batch = train.select(chunk);
            let (_, grad) = loss_and_gradients(&params, batch.batch())?;
            params.axpy(-config.learning_rate, &grad)?;
            steps += 1;
        }
        let (train_loss, _) = loss_and_gradients(&params, train.batch())?;
        let (heldout_metrics, heldout_top1) = match heldout {
            _ if heldout.is_empty() => (None, None),
            TrainData::Pairs(p) => (Some(evaluate_probe(&params, p, config.threshold)?), None),
            TrainData::Candidates(c) => (None, Some(top1_accuracy(&params, c)?)),
        };
        log::debug!("{arch} epoch {epoch}: loss {train_loss:.6} after {steps} steps");
        history.push(EpochRecord {
            epoch,
            steps,
            train_loss,
            heldout: heldout_metrics,
            heldout_top1,
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        train_size: train.len(),
        heldout_size: heldout.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_pairs(n: usize) -> Vec<PairExample> {
        (0..n)
            .map(|i| {
                let x = i as f64 / n as f64 - 0.5;
                PairExample {
                    sample_id: format!("s{i}"),
                    element_index: 0,
                    argument_index: 0,
                    h_e: vec![x, 1.0],
                    h_a: vec![-x, 0.5],
                    label: u8::from(x > 0.0),
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_is_flat() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            seed: 4,
            ..Default::default()
        };
        let data = TrainData::Pairs(toy_pairs(40));
        let out = train_probe(&data, Arch::Linear, &cfg).unwrap();
        assert_eq!(out.params, ProbeParams::init(Arch::Linear, 2, 4));
        let losses: Vec<f64> = out.history.iter().map(|h| h.train_loss).collect();
        assert!(losses.iter().all(|l| l.to_bits() == losses[0].to_bits()));
        assert_eq!((out.train_size, out.heldout_size), (28, 12));
    }

    #[test]
    fn deterministic_history() {
        let cfg = TrainConfig {
            learning_rate: 0.5,
            seed: 7,
            ..Default::default()
        };
        let data = TrainData::Pairs(toy_pairs(60));
        for arch in [Arch::Linear, Arch::SimMlp, Arch::EnhMlp] {
            let a = train_probe(&data, arch, &cfg).unwrap();
            let b = train_probe(&data, arch, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_class_rejected() {
        let mut pairs = toy_pairs(10);
        pairs.iter_mut().for_each(|p| p.label = 1);
        let err = train_on(&TrainData::Pairs(pairs.clone()), &TrainData::Pairs(pairs), Arch::Linear, &TrainConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn max_steps_caps_updates() {
        let cfg = TrainConfig {
            max_steps: Some(3),
            batch_size: 4,
            epochs: 10,
            ..Default::default()
        };
        let data = TrainData::Pairs(toy_pairs(40));
        let out = train_on(&data, &data, Arch::Linear, &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].steps, 3);
    }
}
