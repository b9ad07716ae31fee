//! Threshold evaluation of pair probes and attention-score summaries.

use serde::{Deserialize, Serialize};

use super::model::{attention_scores, predict, ProbeParams};
use super::pairs::{CandidateSet, PairExample};
use crate::error::{Error, Result};
use crate::eval::Prf;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ProbeMetrics {
    /// Precision or recall with an empty denominator is 0 and noted in `warnings`.
    pub fn from_counts(counts: ConfusionCounts, threshold: f64) -> Self {
        let mut warnings = Vec::new();
        let predicted = counts.tp + counts.fp;
        let actual = counts.tp + counts.fn_;
        if predicted == 0 {
            warnings.push("no positive predictions; precision set to 0".to_string());
        }
        if actual == 0 {
            warnings.push("no positive examples; recall set to 0".to_string());
        }
        let prf = Prf::from_counts(counts.tp, predicted, actual);
        ProbeMetrics {
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            threshold,
            counts,
            warnings,
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.counts.total();
        if total == 0 {
            0.0
        } else {
            (self.counts.tp + self.counts.tn) as f64 / total as f64
        }
    }

    pub fn prf(&self) -> Prf {
        Prf {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }
}

/// Element-wise mean of several metric triples (per-layer aggregation).
pub fn mean_prf(items: &[Prf]) -> Result<Prf> {
    if items.is_empty() {
        return Err(Error::validation("nothing to average"));
    }
    let n = items.len() as f64;
    Ok(Prf {
        precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
    })
}

/// Predicts positive iff the probe probability is at least `threshold`.
pub fn evaluate_probe(params: &ProbeParams, pairs: &[PairExample], threshold: f64) -> Result<ProbeMetrics> {
    if pairs.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty pair set"));
    }
    let mut counts = ConfusionCounts::default();
    for p in pairs {
        let positive = predict(params, &p.h_e, &p.h_a)? >= threshold;
        match (positive, p.label == 1) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, false) => counts.tn += 1,
            (false, true) => counts.fn_ += 1,
        }
    }
    Ok(ProbeMetrics::from_counts(counts, threshold))
}

/// Fraction of candidate sets whose highest-scoring candidate is the target.
pub fn top1_accuracy(params: &ProbeParams, sets: &[CandidateSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty candidate set list"));
    }
    let mut hits = 0usize;
    for s in sets {
        let scores = attention_scores(params, &s.h_e, &s.candidates)?;
        let best = scores
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > scores[best] { i } else { best });
        hits += usize::from(best == s.target);
    }
    Ok(hits as f64 / sets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub avg: f64,
    pub max: f64,
    pub min: f64,
    pub n: usize,
}

impl ScoreStats {
    fn of(values: &[f64]) -> Self {
        ScoreStats {
            avg: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            n: values.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub target: ScoreStats,
    pub non_target: ScoreStats,
    /// Candidate sets that entered the summary.
    pub sets: usize,
}

/// Target versus non-target attention scores over every candidate set with
/// at least two candidates.
pub fn attention_analysis(params: &ProbeParams, sets: &[CandidateSet]) -> Result<AttentionSummary> {
    let mut target = Vec::new();
    let mut non_target = Vec::new();
    let mut used = 0;
    for s in sets.iter().filter(|s| s.candidates.len() >= 2) {
        let scores = attention_scores(params, &s.h_e, &s.candidates)?;
        for (j, v) in scores.into_iter().enumerate() {
            if j == s.target {
                target.push(v);
            } else {
                non_target.push(v);
            }
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::validation(
            "attention analysis needs at least one element with two or more candidates",
        ));
    }
    Ok(AttentionSummary {
        target: ScoreStats::of(&target),
        non_target: ScoreStats::of(&non_target),
        sets: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::model::Arch;

    fn pair(label: u8) -> PairExample {
        PairExample {
            sample_id: "s".into(),
            element_index: 0,
            argument_index: usize::from(label == 0),
            h_e: vec![1.0, -1.0],
            h_a: vec![0.5, 2.0],
            label,
        }
    }

    fn set(candidates: Vec<Vec<f64>>) -> CandidateSet {
        CandidateSet {
            sample_id: "s".into(),
            element_index: 0,
            h_e: vec![1.0],
            candidates,
            target: 0,
        }
    }

    #[test]
    fn constant_probe_predicts_all_positive() {
        let pairs: Vec<_> = [1, 0, 0, 1, 0].into_iter().map(pair).collect();
        let m = evaluate_probe(&ProbeParams::zeros(Arch::Linear, 2), &pairs, 0.5).unwrap();
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, 0.4);
        assert_eq!(m.counts, ConfusionCounts { tp: 2, fp: 3, tn: 0, fn_: 0 });
        assert!((m.f1 - 2.0 * 0.4 / 1.4).abs() < 1e-15);
    }

    #[test]
    fn empty_positives_flagged() {
        let pairs = vec![pair(0), pair(0)];
        let m = evaluate_probe(&ProbeParams::zeros(Arch::SimMlp, 2), &pairs, 0.5).unwrap();
        assert_eq!(m.recall, 0.0);
        assert!(m.warnings.iter().any(|w| w.contains("recall")));
    }

    #[test]
    fn counts_serialize_with_fn_key() {
        let json = serde_json::to_value(ConfusionCounts { tp: 1, fp: 2, tn: 3, fn_: 4 }).unwrap();
        assert_eq!(json["fn"], 4);
    }

    #[test]
    fn hand_attention_summary() {
        let p = ProbeParams::identity_attention(1);
        let s = attention_analysis(&p, &[set(vec![vec![1.0], vec![0.0]])]).unwrap();
        assert!((s.target.avg - 0.7311).abs() < 1e-4);
        assert!((s.non_target.avg - 0.2689).abs() < 1e-4);
        let s = attention_analysis(&p, &[set(vec![vec![2.0], vec![2.0], vec![2.0]])]).unwrap();
        assert!((s.target.avg - s.non_target.avg).abs() < 1e-15);
        assert!(attention_analysis(&p, &[set(vec![vec![1.0]])]).is_err());
    }
}
