//! Greedy embedding-distance deduplication of candidate facts.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_json, write_json, AtomicKnowledge};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::providers::EmbeddingProvider;

pub const FILTER_STATE_FILE: &str = "filter_state.json";
pub const INDEX_FILE: &str = "index.json";

/// `v / ||v||`.
pub fn normalize_embedding(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("embedding has non-finite entries"));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::validation("cannot normalize a zero vector"));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub record_id: String,
    pub vector: Vec<f64>,
}

/// Unit vectors of the facts retained so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub dim: usize,
    pub entries: Vec<IndexEntry>,
}

impl EmbeddingIndex {
    pub fn new(dim: usize) -> Self {
        EmbeddingIndex {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, record_id: &str, unit: Vec<f64>) -> Result<()> {
        if unit.len() != self.dim {
            return Err(Error::validation(format!("index dim {} vs vector dim {}", self.dim, unit.len())));
        }
        self.entries.push(IndexEntry {
            record_id: record_id.to_string(),
            vector: unit,
        });
        Ok(())
    }

    /// Smallest pairwise distance between stored vectors, if there are two.
    pub fn min_pairwise_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                let d = l2_distance(&a.vector, &b.vector);
                best = Some(best.map_or(d, |m| m.min(d)));
            }
        }
        best
    }
}

/// Exact linear scan; `(INFINITY, None)` on an empty index.
pub fn nearest_distance<'a>(index: &'a EmbeddingIndex, v: &[f64]) -> Result<(f64, Option<&'a str>)> {
    if v.len() != index.dim {
        return Err(Error::validation(format!("index dim {} vs query dim {}", index.dim, v.len())));
    }
    let mut best = (f64::INFINITY, None);
    for e in &index.entries {
        let d = l2_distance(&e.vector, v);
        if d < best.0 {
            best = (d, Some(e.record_id.as_str()));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub record_id: String,
    pub nearest_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub retained: Vec<AtomicKnowledge>,
    pub rejected: Vec<Rejection>,
    pub index: EmbeddingIndex,
    pub threshold: f64,
}

/// Progress saved when the embedding provider fails part-way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub input_hash: String,
    pub threshold: f64,
    /// Candidates before this position have been decided.
    pub cursor: usize,
    pub retained_ids: Vec<String>,
    pub rejected: Vec<Rejection>,
    pub index: EmbeddingIndex,
}

fn input_hash(candidates: &[AtomicKnowledge]) -> String {
    let joined: String = candidates.iter().map(|c| format!("{}\0{}\0", c.id, c.text)).collect();
    sha256_hex(joined.as_bytes())
}

/// Keeps a candidate iff its nearest retained neighbour is farther than
/// `threshold`, processing candidates in order and inserting on accept.
///
/// With `state_dir`, a provider failure saves a resume cursor and the partial
/// index there, and a later call with the same candidates continues from it.
pub fn similarity_filter(
    candidates: &[AtomicKnowledge],
    embedder: &dyn EmbeddingProvider,
    threshold: f64,
    state_dir: Option<&Path>,
) -> Result<FilterOutcome> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::validation(format!("threshold must be >= 0, got {threshold}")));
    }
    let hash = input_hash(candidates);
    let state_path = state_dir.map(|d| d.join(FILTER_STATE_FILE));
    let mut state = match &state_path {
        Some(p) if p.exists() => {
            let s: FilterState = read_json(p)?;
            if s.input_hash == hash && s.threshold == threshold {
                log::info!("resuming similarity filter at candidate {}", s.cursor);
                s
            } else {
                log::warn!("ignoring stale filter state at {}", p.display());
                fresh_state(&hash, threshold, embedder.dim())
            }
        }
        _ => fresh_state(&hash, threshold, embedder.dim()),
    };

    let pending = &candidates[state.cursor..];
    let embedded: Vec<Result<Vec<f64>>> = pending
        .par_iter()
        .map(|c| normalize_embedding(&embedder.embed(&c.text)?.values))
        .collect();

    for (c, emb) in pending.iter().zip(embedded) {
        let unit = match emb {
            Ok(u) => u,
            Err(e) => {
                if let Some(p) = &state_path {
                    write_json(&state, p)?;
                    write_json(&state.index, &p.with_file_name(INDEX_FILE))?;
                }
                return Err(e);
            }
        };
        let (distance, nearest) = nearest_distance(&state.index, &unit)?;
        if distance > threshold {
            state.index.insert(&c.id, unit)?;
            state.retained_ids.push(c.id.clone());
        } else {
            state.rejected.push(Rejection {
                record_id: c.id.clone(),
                nearest_id: nearest.unwrap_or_default().to_string(),
                distance,
            });
        }
        state.cursor += 1;
    }

    if let Some(p) = &state_path {
        if p.exists() {
            std::fs::remove_file(p).map_err(|e| Error::io(format!("remove {}", p.display()), e))?;
        }
    }
    let retained = candidates
        .iter()
        .filter(|c| state.retained_ids.contains(&c.id))
        .cloned()
        .collect();
    Ok(FilterOutcome {
        retained,
        rejected: state.rejected,
        index: state.index,
        threshold,
    })
}

fn fresh_state(hash: &str, threshold: f64, dim: usize) -> FilterState {
    FilterState {
        input_hash: hash.to_string(),
        threshold,
        cursor: 0,
        retained_ids: Vec::new(),
        rejected: Vec::new(),
        index: EmbeddingIndex::new(dim),
    }
}
