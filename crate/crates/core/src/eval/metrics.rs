//! Exact match, sentence-level BLEU and ROUGE-N/L.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and splits on whitespace; every non-alphanumeric,
/// non-whitespace character becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

const SENTENCE_PUNCT: [char; 3] = ['.', '!', '?'];

/// Lowercase, trim, collapse whitespace runs, strip terminal sentence punctuation.
pub fn normalize_for_em(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(|c: char| SENTENCE_PUNCT.contains(&c) || c.is_whitespace())
        .to_string()
}

pub fn exact_match(prediction: &str, reference: &str) -> f64 {
    if normalize_for_em(prediction) == normalize_for_em(reference) {
        1.0
    } else {
        0.0
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

fn clipped_overlap(pred: &[String], reference: &[String], n: usize) -> usize {
    let ref_counts = ngram_counts(reference, n);
    ngram_counts(pred, n)
        .into_iter()
        .map(|(g, c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Sentence-level BLEU over pre-tokenized input.
///
/// Orders run up to `min(max_order, |reference|)`. An order with zero clipped
/// matches contributes `1 / (candidates + 1)` (add-one smoothing). The empty
/// prediction scores 0.
pub fn bleu_tokens(pred: &[String], reference: &[String], max_order: usize) -> Result<f64> {
    if !(1..=4).contains(&max_order) {
        return Err(Error::validation(format!("BLEU order must be 1..=4, got {max_order}")));
    }
    if pred.is_empty() || reference.is_empty() {
        return Ok(0.0);
    }
    let orders = max_order.min(reference.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let matches = clipped_overlap(pred, reference, n);
        let total = (pred.len() + 1).saturating_sub(n);
        let p = if matches == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matches as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let (c, r) = (pred.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(bp * (log_sum / orders as f64).exp())
}

pub fn bleu_n(prediction: &str, reference: &str, max_order: usize) -> Result<f64> {
    bleu_tokens(&tokenize(prediction), &tokenize(reference), max_order)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(overlap: usize, pred_total: usize, ref_total: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(overlap, pred_total);
        let recall = ratio(overlap, ref_total);
        Prf {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// ROUGE-N with clipped n-gram overlap. A nonempty reference shorter than
/// `n` tokens is scored at order `|reference|`, mirroring the BLEU rule.
pub fn rouge_n_tokens(pred: &[String], reference: &[String], n: usize) -> Result<Prf> {
    if !(1..=2).contains(&n) {
        return Err(Error::validation(format!("ROUGE-N order must be 1 or 2, got {n}")));
    }
    let n = if reference.is_empty() { n } else { n.min(reference.len()) };
    let overlap = clipped_overlap(pred, reference, n);
    let count = |t: &[String]| (t.len() + 1).saturating_sub(n);
    Ok(Prf::from_counts(overlap, count(pred), count(reference)))
}

pub fn rouge_n(prediction: &str, reference: &str, n: usize) -> Result<Prf> {
    rouge_n_tokens(&tokenize(prediction), &tokenize(reference), n)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens(pred: &[String], reference: &[String]) -> Prf {
    Prf::from_counts(lcs_len(pred, reference), pred.len(), reference.len())
}

pub fn rouge_l(prediction: &str, reference: &str) -> Prf {
    rouge_l_tokens(&tokenize(prediction), &tokenize(reference))
}

/// All six reported metrics for one prediction/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemScores {
    pub em: f64,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

impl ItemScores {
    pub fn score(prediction: &str, reference: &str) -> Self {
        let p = tokenize(prediction);
        let r = tokenize(reference);
        ItemScores {
            em: exact_match(prediction, reference),
            bleu1: bleu_tokens(&p, &r, 1).expect("order 1 is valid"),
            bleu4: bleu_tokens(&p, &r, 4).expect("order 4 is valid"),
            rouge1: rouge_n_tokens(&p, &r, 1).expect("order 1 is valid").f1,
            rouge2: rouge_n_tokens(&p, &r, 2).expect("order 2 is valid").f1,
            rouge_l: rouge_l_tokens(&p, &r).f1,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.em, self.bleu1, self.bleu4, self.rouge1, self.rouge2, self.rouge_l]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        ItemScores {
            em: a[0],
            bleu1: a[1],
            bleu4: a[2],
            rouge1: a[3],
            rouge2: a[4],
            rouge_l: a[5],
        }
    }
}

pub const METRIC_NAMES: [&str; 6] = ["em", "bleu1", "bleu4", "rouge1", "rouge2", "rougeL"];
