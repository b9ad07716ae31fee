//! Corpus construction: candidate generation, similarity filtering, voting,
//! paraphrase expansion, element annotation, question generation and review.

mod annotate;
mod expand;
mod filter;
mod generate;
mod questions;
mod review;
mod templates;
mod vote;

use serde::{Deserialize, Serialize};

pub use annotate::{annotate_elements, parse_pairs, AnnotationOutcome};
pub use expand::{expand_descriptions, ExpansionOutcome};
pub use filter::{
    l2_distance, nearest_distance, normalize_embedding, similarity_filter, EmbeddingIndex, FilterOutcome,
    FilterState, IndexEntry, Rejection, FILTER_STATE_FILE, INDEX_FILE,
};
pub use generate::{candidate_records, candidate_sentences, generate_atomic_candidates, strip_list_marker};
pub use questions::{clean_stem, generate_questions, QuestionOutcome};
pub use review::{ReviewItem, ReviewQueue, ReviewRequest, ReviewStage, ReviewStatus, REVIEW_FILE};
pub use templates::{render, TemplateId, Templates};
pub use vote::{parse_judgment, vote_validate, Criterion, Verdict, VoteRecord};

/// Sampling settings shared by the generation stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    /// Used for validators and the annotator.
    pub validation_temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 1.0,
            validation_temperature: 0.0,
            max_tokens: 1024,
        }
    }
}
