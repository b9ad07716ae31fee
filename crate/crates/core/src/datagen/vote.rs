//! Unanimous multi-validator voting over per-criterion verdicts.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::review::{ReviewRequest, ReviewStage};
use super::templates::{TemplateId, Templates};
use super::GenerationParams;
use crate::error::Result;
use crate::providers::{ChatProvider, ChatRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Fictional,
    RoleRich,
    Concise,
    SemanticConsistency,
}

impl Criterion {
    pub const ATOMIC: [Criterion; 3] = [Criterion::Fictional, Criterion::RoleRich, Criterion::Concise];
    pub const DESCRIPTION: [Criterion; 4] = [
        Criterion::Fictional,
        Criterion::RoleRich,
        Criterion::Concise,
        Criterion::SemanticConsistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Fictional => "fictional",
            Criterion::RoleRich => "role_rich",
            Criterion::Concise => "concise",
            Criterion::SemanticConsistency => "semantic_consistency",
        }
    }

    fn parse(s: &str) -> Option<Criterion> {
        Criterion::DESCRIPTION.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub sample_id: String,
    /// validator id → criterion → passed.
    pub votes: BTreeMap<String, BTreeMap<Criterion, bool>>,
    pub verdict: Verdict,
    /// Validators whose judgment could not be fully parsed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unparsed: Vec<String>,
}

/// Reads `criterion: PASS|FAIL` lines. Criteria that are missing, repeated or
/// malformed count as failed; the flag reports whether anything was off.
pub fn parse_judgment(text: &str, criteria: &[Criterion]) -> (BTreeMap<Criterion, bool>, bool) {
    let mut seen: BTreeMap<Criterion, Option<bool>> = BTreeMap::new();
    let mut clean = true;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let parsed = line.split_once(':').and_then(|(k, v)| {
            let c = Criterion::parse(&k.trim().to_ascii_lowercase())?;
            let pass = match v.trim().to_ascii_uppercase().as_str() {
                "PASS" => true,
                "FAIL" => false,
                _ => return None,
            };
            Some((c, pass))
        });
        match parsed {
            Some((c, pass)) if criteria.contains(&c) => {
                if seen.insert(c, Some(pass)).is_some() {
                    seen.insert(c, None);
                    clean = false;
                }
            }
            _ => clean = false,
        }
    }
    let out = criteria
        .iter()
        .map(|c| {
            let v = seen.get(c).copied().flatten();
            clean &= v.is_some();
            (*c, v.unwrap_or(false))
        })
        .collect();
    (out, clean)
}

/// Asks every validator to judge `text`; `original` selects the paraphrase
/// template with the semantic-consistency criterion.
pub fn vote_validate(
    sample_id: &str,
    text: &str,
    original: Option<&str>,
    validators: &[Arc<dyn ChatProvider>],
    templates: &Templates,
    params: &GenerationParams,
) -> Result<(VoteRecord, Vec<ReviewRequest>)> {
    if validators.is_empty() {
        return Err(crate::error::Error::validation("at least one validator is required"));
    }
    let (template, criteria, stage): (TemplateId, &[Criterion], ReviewStage) = match original {
        Some(_) => (TemplateId::ValidateDescription, &Criterion::DESCRIPTION, ReviewStage::Description),
        None => (TemplateId::ValidateAtomic, &Criterion::ATOMIC, ReviewStage::Atomic),
    };
    let prompt = match original {
        Some(o) => templates.render(template, &[("original", o), ("sample", text)])?,
        None => templates.render(template, &[("sample", text)])?,
    };
    let mut record = VoteRecord {
        sample_id: sample_id.to_string(),
        votes: BTreeMap::new(),
        verdict: Verdict::Pass,
        unparsed: Vec::new(),
    };
    let mut reviews = Vec::new();
    for v in validators {
        let reply = v.complete(&ChatRequest {
            provider_id: v.id().to_string(),
            template_id: template.name().to_string(),
            rendered_prompt: prompt.clone(),
            temperature: params.validation_temperature,
            max_tokens: params.max_tokens,
        })?;
        let (votes, clean) = parse_judgment(&reply, criteria);
        if !clean {
            record.unparsed.push(v.id().to_string());
            reviews.push(ReviewRequest::new(
                sample_id,
                stage,
                format!("unparseable judgment from validator `{}`", v.id()),
            ));
        }
        if votes.values().any(|p| !p) {
            record.verdict = Verdict::Fail;
        }
        record.votes.insert(v.id().to_string(), votes);
    }
    Ok((record, reviews))
}
