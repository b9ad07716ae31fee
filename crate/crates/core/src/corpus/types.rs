use std::collections::BTreeMap;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::span::{char_len, slice_chars};
use super::text::is_single_sentence;
use crate::error::{Error, Result};

/// Unknown fields carried through a read/write round-trip untouched.
pub type Extra = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Atomic,
    Description,
    Annotation,
    Question,
}

impl RecordKind {
    pub fn file_name(self) -> &'static str {
        match self {
            RecordKind::Atomic => "atomic.jsonl",
            RecordKind::Description => "descriptions.jsonl",
            RecordKind::Annotation => "annotations.jsonl",
            RecordKind::Question => "questions.jsonl",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RecordKind::Atomic => "atomic",
            RecordKind::Description => "description",
            RecordKind::Annotation => "annotation",
            RecordKind::Question => "question",
        };
        f.write_str(s)
    }
}

/// A line-delimited corpus record with self-contained invariants.
pub trait Record: Serialize + DeserializeOwned + Clone {
    const KIND: RecordKind;

    /// Checks the invariants that need nothing but the record itself.
    fn validate(&self) -> Result<()>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criteria {
    pub fictional: bool,
    pub role_rich: bool,
    pub concise: bool,
}

impl Criteria {
    pub fn all() -> Self {
        Criteria {
            fictional: true,
            role_rich: true,
            concise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicKnowledge {
    pub id: String,
    pub text: String,
    pub generator: String,
    pub criteria: Criteria,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Record for AtomicKnowledge {
    const KIND: RecordKind = RecordKind::Atomic;

    fn validate(&self) -> Result<()> {
        nonempty("id", &self.id)?;
        if self.text.trim().is_empty() {
            return Err(Error::invariant("text", "empty"));
        }
        if !is_single_sentence(&self.text) {
            return Err(Error::invariant(
                "text",
                "must be a single sentence ending in exactly one terminal punctuation mark",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeDescription {
    pub id: String,
    pub knowledge_id: String,
    pub text: String,
    pub index: u32,
    /// Word index of the first finite verb; overrides the lexicon heuristic when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_verb_index: Option<usize>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Record for KnowledgeDescription {
    const KIND: RecordKind = RecordKind::Description;

    fn validate(&self) -> Result<()> {
        nonempty("id", &self.id)?;
        nonempty("knowledge_id", &self.knowledge_id)?;
        nonempty("text", self.text.trim())?;
        if self.index == 0 {
            return Err(Error::invariant("index", "indexes start at 1"));
        }
        Ok(())
    }
}

/// Half-open range of Unicode scalar values within a host text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub char_start: usize,
    pub char_end: usize,
}

impl Span {
    pub fn new(char_start: usize, char_end: usize) -> Result<Self> {
        let span = Span {
            char_start,
            char_end,
        };
        span.check()?;
        Ok(span)
    }

    pub fn len(&self) -> usize {
        self.char_end.saturating_sub(self.char_start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.char_start < other.char_end && other.char_start < self.char_end
    }

    fn check(&self) -> Result<()> {
        if self.char_start >= self.char_end {
            return Err(Error::invariant(
                "Span",
                format!(
                    "char_start {} must be < char_end {}",
                    self.char_start, self.char_end
                ),
            ));
        }
        Ok(())
    }

    /// Checks `0 <= start < end <= len(host)`.
    pub fn check_within(&self, host: &str) -> Result<()> {
        self.check()?;
        let len = char_len(host);
        if self.char_end > len {
            return Err(Error::invariant(
                "Span",
                format!("char_end {} exceeds host text length {}", self.char_end, len),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementArgumentPair {
    pub element_text: String,
    pub element_span: Span,
    pub argument_text: String,
    pub argument_span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotationSource {
    #[serde(rename = "model")]
    Model,
    #[serde(rename = "human-corrected")]
    HumanCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAnnotation {
    pub knowledge_id: String,
    pub pairs: Vec<ElementArgumentPair>,
    pub source: AnnotationSource,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ScenarioAnnotation {
    /// Number of element-argument pairs (`m`).
    pub fn m(&self) -> usize {
        self.pairs.len()
    }

    /// Host-dependent invariants: spans inside the text, slices equal the
    /// stored surfaces, and no partial overlaps within either role kind.
    pub fn validate_against(&self, host: &str) -> Result<()> {
        for (i, p) in self.pairs.iter().enumerate() {
            p.element_span.check_within(host)?;
            p.argument_span.check_within(host)?;
            if slice_chars(host, p.element_span) != Some(p.element_text.as_str()) {
                return Err(Error::invariant(
                    format!("pairs[{i}].element_text"),
                    "does not equal the host-text slice at element_span",
                ));
            }
            if slice_chars(host, p.argument_span) != Some(p.argument_text.as_str()) {
                return Err(Error::invariant(
                    format!("pairs[{i}].argument_text"),
                    "does not equal the host-text slice at argument_span",
                ));
            }
        }
        check_disjoint(self.pairs.iter().map(|p| p.element_span), "element_span")?;
        check_disjoint(self.pairs.iter().map(|p| p.argument_span), "argument_span")?;
        Ok(())
    }
}

// Identical spans are tolerated: one argument may fill several elements.
fn check_disjoint(spans: impl Iterator<Item = Span>, field: &str) -> Result<()> {
    let mut spans: Vec<Span> = spans.collect();
    spans.sort();
    spans.dedup();
    for w in spans.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(Error::invariant(
                field,
                format!(
                    "spans {}..{} and {}..{} overlap",
                    w[0].char_start, w[0].char_end, w[1].char_start, w[1].char_end
                ),
            ));
        }
    }
    Ok(())
}

impl Record for ScenarioAnnotation {
    const KIND: RecordKind = RecordKind::Annotation;

    fn validate(&self) -> Result<()> {
        nonempty("knowledge_id", &self.knowledge_id)?;
        if self.pairs.is_empty() {
            return Err(Error::invariant("pairs", "at least one pair required"));
        }
        for p in &self.pairs {
            p.element_span.check()?;
            p.argument_span.check()?;
            if p.element_span.len() != p.element_text.chars().count() {
                return Err(Error::invariant("Span", "element_span length differs from element_text"));
            }
            if p.argument_span.len() != p.argument_text.chars().count() {
                return Err(Error::invariant("Span", "argument_span length differs from argument_text"));
            }
        }
        check_disjoint(self.pairs.iter().map(|p| p.element_span), "element_span")?;
        check_disjoint(self.pairs.iter().map(|p| p.argument_span), "argument_span")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioQuestion {
    pub id: String,
    pub knowledge_id: String,
    pub element_text: String,
    pub prompt: String,
    pub answer: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Record for ScenarioQuestion {
    const KIND: RecordKind = RecordKind::Question;

    fn validate(&self) -> Result<()> {
        nonempty("id", &self.id)?;
        nonempty("knowledge_id", &self.knowledge_id)?;
        nonempty("prompt", self.prompt.trim())?;
        nonempty("answer", self.answer.trim())?;
        if self.prompt.contains(&self.answer) {
            return Err(Error::invariant("prompt", "contains the answer verbatim"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSide {
    FormatTrain,
    Eval,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub atomic: usize,
    pub descriptions: usize,
    pub questions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub counts: Counts,
    #[serde(default)]
    pub splits: BTreeMap<String, SplitSide>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

fn nonempty(field: &str, value: &str) -> Result<()> {
    if value.is_empty() {
        Err(Error::invariant(field, "empty"))
    } else {
        Ok(())
    }
}
