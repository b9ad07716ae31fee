//! Element/argument alignment, level pooling and probe example construction.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive::HiddenArchive;
use crate::corpus::{resolve_span, AtomicKnowledge, KnowledgeDescription, ScenarioAnnotation, Span};
use crate::error::{Error, Result};

/// One (element, argument) representation pair. `label == 1` iff the
/// element and argument come from the same annotated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub sample_id: String,
    pub element_index: usize,
    pub argument_index: usize,
    pub h_e: Vec<f64>,
    pub h_a: Vec<f64>,
    pub label: u8,
}

/// An element with the argument vectors it should attend over; `target`
/// indexes the true argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub sample_id: String,
    pub element_index: usize,
    pub h_e: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanPair {
    pub element: Span,
    pub argument: Span,
}

/// Annotation spans re-expressed in the coordinates of one archive sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub sample_id: String,
    pub pairs: Vec<SpanPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub sample_id: String,
    pub reason: String,
}

/// Maps each archive sample to its annotation. A sample id may be an atomic
/// knowledge id or a description id. When the sample text is the annotated
/// text the stored spans are used; otherwise each surface is re-resolved at
/// its first occurrence in the sample text.
pub fn align_samples(
    archive: &HiddenArchive,
    annotations: &[ScenarioAnnotation],
    atomic: &[AtomicKnowledge],
    descriptions: &[KnowledgeDescription],
) -> (Vec<ProbeSample>, Vec<SkippedSample>) {
    let by_knowledge: HashMap<&str, &ScenarioAnnotation> =
        annotations.iter().map(|a| (a.knowledge_id.as_str(), a)).collect();
    let host: HashMap<&str, &str> = atomic.iter().map(|a| (a.id.as_str(), a.text.as_str())).collect();
    let parent: HashMap<&str, &str> = descriptions
        .iter()
        .map(|d| (d.id.as_str(), d.knowledge_id.as_str()))
        .collect();

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (sample_id, entry) in archive.manifest() {
        let knowledge_id = parent.get(sample_id.as_str()).copied().unwrap_or(sample_id.as_str());
        let Some(ann) = by_knowledge.get(knowledge_id) else {
            skipped.push(SkippedSample {
                sample_id: sample_id.clone(),
                reason: format!("no annotation for knowledge `{knowledge_id}`"),
            });
            continue;
        };
        let same_text = host.get(knowledge_id) == Some(&entry.text.as_str());
        let pairs: Result<Vec<SpanPair>> = ann
            .pairs
            .iter()
            .map(|p| {
                if same_text {
                    Ok(SpanPair {
                        element: p.element_span,
                        argument: p.argument_span,
                    })
                } else {
                    Ok(SpanPair {
                        element: resolve_span(&entry.text, &p.element_text, 1)?,
                        argument: resolve_span(&entry.text, &p.argument_text, 1)?,
                    })
                }
            })
            .collect();
        match pairs {
            Ok(pairs) => samples.push(ProbeSample {
                sample_id: sample_id.clone(),
                pairs,
            }),
            Err(e) => skipped.push(SkippedSample {
                sample_id: sample_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (samples, skipped)
}

/// Tokens whose character spans intersect `span`.
pub fn char_span_to_tokens(token_spans: &[Span], span: Span) -> Option<Range<usize>> {
    let hits: Vec<usize> = token_spans
        .iter()
        .enumerate()
        .filter(|(_, t)| t.overlaps(&span))
        .map(|(i, _)| i)
        .collect();
    Some(*hits.first()?..*hits.last()? + 1)
}

/// The selected layers of one sample, held in memory for pooling.
struct SampleLayers {
    layers: Vec<Array2<f32>>,
    dim: usize,
    n_tokens: usize,
}

impl SampleLayers {
    fn load(archive: &HiddenArchive, sample_id: &str, layers: &[u32]) -> Result<Self> {
        let entry = archive.entry(sample_id)?;
        if layers.is_empty() {
            return Err(Error::validation("no layers selected"));
        }
        Ok(SampleLayers {
            layers: layers
                .iter()
                .map(|&l| archive.read_layer(sample_id, l))
                .collect::<Result<_>>()?,
            dim: entry.dim,
            n_tokens: entry.n_tokens,
        })
    }

    /// Mean over layers of the mean over `tokens`.
    fn pool(&self, tokens: Range<usize>) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::validation("empty token span"));
        }
        if tokens.end > self.n_tokens {
            return Err(Error::validation(format!(
                "token span {}..{} outside 0..{}",
                tokens.start, tokens.end, self.n_tokens
            )));
        }
        let mut out = vec![0.0f64; self.dim];
        for m in &self.layers {
            let mut layer_mean = vec![0.0f64; self.dim];
            for t in tokens.clone() {
                for (acc, v) in layer_mean.iter_mut().zip(m.row(t)) {
                    *acc += *v as f64;
                }
            }
            for (o, v) in out.iter_mut().zip(layer_mean) {
                *o += v / tokens.len() as f64;
            }
        }
        let n_layers = self.layers.len() as f64;
        out.iter_mut().for_each(|v| *v /= n_layers);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                block: "representation".into(),
                message: "non-finite hidden state".into(),
            });
        }
        Ok(out)
    }
}

/// Level representation of a token range: mean over `layers` of the mean
/// over the range's tokens.
pub fn level_representation(
    archive: &HiddenArchive,
    sample_id: &str,
    tokens: Range<usize>,
    layers: &[u32],
) -> Result<Vec<f64>> {
    SampleLayers::load(archive, sample_id, layers)?.pool(tokens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub positives: usize,
    pub negatives: usize,
    pub available_negatives: usize,
    pub positive_fraction: f64,
    pub negative_ratio: f64,
    pub seed: u64,
    pub skipped: Vec<SkippedSample>,
}

struct PooledSample {
    sample_id: String,
    elements: Vec<Vec<f64>>,
    arguments: Vec<Vec<f64>>,
}

fn pool_sample(archive: &HiddenArchive, sample: &ProbeSample, layers: &[u32]) -> Result<PooledSample> {
    let entry = archive.entry(&sample.sample_id)?;
    let data = SampleLayers::load(archive, &sample.sample_id, layers)?;
    let pool_span = |span: Span| -> Result<Vec<f64>> {
        let tokens = char_span_to_tokens(&entry.token_char_spans, span).ok_or_else(|| {
            Error::validation(format!(
                "span {}..{} covers no token",
                span.char_start, span.char_end
            ))
        })?;
        data.pool(tokens)
    };
    let mut pooled = PooledSample {
        sample_id: sample.sample_id.clone(),
        elements: Vec::new(),
        arguments: Vec::new(),
    };
    for p in &sample.pairs {
        pooled.elements.push(pool_span(p.element)?);
        pooled.arguments.push(pool_span(p.argument)?);
    }
    Ok(pooled)
}

fn pool_all(
    archive: &HiddenArchive,
    samples: &[ProbeSample],
    layers: &[u32],
    skipped: &mut Vec<SkippedSample>,
) -> Result<Vec<PooledSample>> {
    let mut out = Vec::new();
    for s in samples {
        match pool_sample(archive, s, layers) {
            Ok(p) => out.push(p),
            Err(Error::Validation(reason)) => skipped.push(SkippedSample {
                sample_id: s.sample_id.clone(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Positives are every `(i, i)`; negatives are the `m² - m` mismatches of each
/// sample, subsampled uniformly (seeded) to `round(negative_ratio * positives)`
/// corpus-wide. Output order follows samples, then `(i, j)`.
pub fn build_pairs(
    samples: &[ProbeSample],
    archive: &HiddenArchive,
    layers: &[u32],
    negative_ratio: f64,
    seed: u64,
) -> Result<(Vec<PairExample>, BalanceReport)> {
    if !(negative_ratio > 0.0 && negative_ratio.is_finite()) {
        return Err(Error::validation(format!("negative_ratio must be > 0, got {negative_ratio}")));
    }
    let mut skipped = Vec::new();
    let pooled = pool_all(archive, samples, layers, &mut skipped)?;

    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    let mut negatives: Vec<usize> = Vec::new();
    for (s, p) in pooled.iter().enumerate() {
        let m = p.elements.len();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    negatives.push(slots.len());
                }
                slots.push((s, i, j));
            }
        }
    }
    let positives = slots.len() - negatives.len();
    let wanted = ((negative_ratio * positives as f64).round() as usize).min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; slots.len()];
    for k in rand::seq::index::sample(&mut rng, negatives.len(), wanted) {
        keep[negatives[k]] = true;
    }

    let mut pairs = Vec::with_capacity(positives + wanted);
    for (k, &(s, i, j)) in slots.iter().enumerate() {
        if i != j && !keep[k] {
            continue;
        }
        let p = &pooled[s];
        pairs.push(PairExample {
            sample_id: p.sample_id.clone(),
            element_index: i,
            argument_index: j,
            h_e: p.elements[i].clone(),
            h_a: p.arguments[j].clone(),
            label: u8::from(i == j),
        });
    }
    let total = positives + wanted;
    let report = BalanceReport {
        positives,
        negatives: wanted,
        available_negatives: negatives.len(),
        positive_fraction: if total == 0 { 0.0 } else { positives as f64 / total as f64 },
        negative_ratio,
        seed,
        skipped,
    };
    Ok((pairs, report))
}

/// Regroups the positive pairs of each sample into per-element candidate sets
/// over that sample's arguments. Elements of single-pair samples are dropped.
pub fn candidate_sets_from_pairs(pairs: &[PairExample]) -> Vec<CandidateSet> {
    let mut by_sample: BTreeMap<&str, BTreeMap<usize, &PairExample>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| p.label == 1) {
        by_sample.entry(&p.sample_id).or_default().insert(p.element_index, p);
    }
    let mut sets = Vec::new();
    for (sample_id, positives) in by_sample {
        if positives.len() < 2 {
            continue;
        }
        let candidates: Vec<Vec<f64>> = positives.values().map(|p| p.h_a.clone()).collect();
        for (target, p) in positives.values().enumerate() {
            sets.push(CandidateSet {
                sample_id: sample_id.to_string(),
                element_index: p.element_index,
                h_e: p.h_e.clone(),
                candidates: candidates.clone(),
                target,
            });
        }
    }
    sets
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// The sample's annotated arguments.
    #[default]
    Arguments,
    /// The true argument first, then every token outside the element and
    /// its argument.
    Tokens,
}

impl std::str::FromStr for CandidateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arguments" => Ok(CandidateMode::Arguments),
            "tokens" => Ok(CandidateMode::Tokens),
            other => Err(Error::validation(format!("unknown candidate mode `{other}`"))),
        }
    }
}

pub fn build_candidate_sets(
    samples: &[ProbeSample],
    archive: &HiddenArchive,
    layers: &[u32],
    mode: CandidateMode,
) -> Result<(Vec<CandidateSet>, Vec<SkippedSample>)> {
    let mut skipped = Vec::new();
    match mode {
        CandidateMode::Arguments => {
            let pooled = pool_all(archive, samples, layers, &mut skipped)?;
            let mut sets = Vec::new();
            for p in pooled {
                for (i, h_e) in p.elements.iter().enumerate() {
                    sets.push(CandidateSet {
                        sample_id: p.sample_id.clone(),
                        element_index: i,
                        h_e: h_e.clone(),
                        candidates: p.arguments.clone(),
                        target: i,
                    });
                }
            }
            Ok((sets, skipped))
        }
        CandidateMode::Tokens => {
            let pooled = pool_all(archive, samples, layers, &mut skipped)?;
            let kept: Vec<&ProbeSample> = samples
                .iter()
                .filter(|s| !skipped.iter().any(|k| k.sample_id == s.sample_id))
                .collect();
            let mut sets = Vec::new();
            for (sample, p) in kept.into_iter().zip(pooled) {
                let entry = archive.entry(&sample.sample_id)?;
                let data = SampleLayers::load(archive, &sample.sample_id, layers)?;
                for (i, pair) in sample.pairs.iter().enumerate() {
                    let mut candidates = vec![p.arguments[i].clone()];
                    for (t, span) in entry.token_char_spans.iter().enumerate() {
                        if span.overlaps(&pair.element) || span.overlaps(&pair.argument) {
                            continue;
                        }
                        candidates.push(data.pool(t..t + 1)?);
                    }
                    sets.push(CandidateSet {
                        sample_id: p.sample_id.clone(),
                        element_index: i,
                        h_e: p.elements[i].clone(),
                        candidates,
                        target: 0,
                    });
                }
            }
            Ok((sets, skipped))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::archive::ArchiveWriter;

    fn span(a: usize, b: usize) -> Span {
        Span::new(a, b).unwrap()
    }

    #[test]
    fn token_alignment() {
        let toks = [span(0, 4), span(5, 13), span(14, 20)];
        assert_eq!(char_span_to_tokens(&toks, span(5, 20)), Some(1..3));
        assert_eq!(char_span_to_tokens(&toks, span(6, 7)), Some(1..2));
        assert_eq!(char_span_to_tokens(&toks, span(4, 5)), None);
    }

    fn one_token_archive(dir: &std::path::Path) -> HiddenArchive {
        let mut w = ArchiveWriter::create(dir).unwrap();
        let layer = |v: [f32; 3]| Array2::from_shape_vec((1, 3), v.to_vec()).unwrap();
        w.add_sample(
            "s",
            "Bo",
            vec![span(0, 2)],
            &[(1, layer([1.0, 2.0, 3.0])), (2, layer([2.0, 3.0, 4.0])), (3, layer([6.0, 1.0, 2.0]))],
        )
        .unwrap();
        w.finish().unwrap()
    }

    #[test]
    fn pooling_single_token_three_layers() {
        let dir = tempfile::tempdir().unwrap();
        let a = one_token_archive(dir.path());
        let v = level_representation(&a, "s", 0..1, &[1, 2, 3]).unwrap();
        assert_eq!(v, vec![3.0, 2.0, 3.0]);
        assert!(level_representation(&a, "s", 0..2, &[1, 2, 3]).is_err());
        assert!(level_representation(&a, "s", 0..0, &[1, 2, 3]).is_err());
        assert!(matches!(level_representation(&a, "s", 0..1, &[1, 4]), Err(Error::NotFound(_))));
    }

    #[test]
    fn pooling_constant_span_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::create(dir.path()).unwrap();
        let m = Array2::from_shape_fn((3, 2), |(_, j)| [0.5f32, -1.25][j]);
        w.add_sample("s", "a b c", vec![span(0, 1), span(2, 3), span(4, 5)], &[(1, m.clone()), (2, m)])
            .unwrap();
        let a = w.finish().unwrap();
        assert_eq!(level_representation(&a, "s", 0..3, &[1, 2]).unwrap(), vec![0.5, -1.25]);
    }
}
