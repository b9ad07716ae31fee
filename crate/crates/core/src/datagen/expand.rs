use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::generate::candidate_sentences;
use super::review::{ReviewRequest, ReviewStage};
use super::templates::{TemplateId, Templates};
use super::vote::{vote_validate, Verdict, VoteRecord};
use super::GenerationParams;
use crate::corpus::{AtomicKnowledge, Extra, KnowledgeDescription};
use crate::error::Result;
use crate::hashing::content_id;
use crate::providers::{ChatProvider, ChatRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOutcome {
    pub descriptions: Vec<KnowledgeDescription>,
    pub votes: Vec<VoteRecord>,
    pub reviews: Vec<ReviewRequest>,
}

fn existing_note(seen: &[String]) -> String {
    if seen.is_empty() {
        return String::new();
    }
    let mut note = String::from("- Do not repeat any of these earlier rewrites:\n");
    for s in seen {
        note.push_str("  ");
        note.push_str(s);
        note.push('\n');
    }
    note
}

/// Collects `k` validated paraphrases of `knowledge`, asking again up to
/// `retry_budget` times for whatever is still missing.
pub fn expand_descriptions(
    knowledge: &AtomicKnowledge,
    k: usize,
    generator: &dyn ChatProvider,
    validators: &[Arc<dyn ChatProvider>],
    templates: &Templates,
    params: &GenerationParams,
    retry_budget: usize,
) -> Result<ExpansionOutcome> {
    let mut out = ExpansionOutcome {
        descriptions: Vec::new(),
        votes: Vec::new(),
        reviews: Vec::new(),
    };
    if k == 0 {
        return Ok(out);
    }
    let mut seen: Vec<String> = Vec::new();
    for _ in 0..=retry_budget {
        let needed = k - out.descriptions.len();
        if needed == 0 {
            break;
        }
        let needed_text = needed.to_string();
        let note = existing_note(&seen);
        let prompt = templates.render(
            TemplateId::DescriptionExpansion,
            &[("knowledge", &knowledge.text), ("needed", &needed_text), ("existing", &note)],
        )?;
        let reply = generator.complete(&ChatRequest {
            provider_id: generator.id().to_string(),
            template_id: TemplateId::DescriptionExpansion.name().to_string(),
            rendered_prompt: prompt,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        })?;
        let fresh: Vec<String> = candidate_sentences(&reply)
            .into_iter()
            .filter(|s| *s != knowledge.text)
            .fold(Vec::new(), |mut acc, s| {
                if !seen.contains(&s) && !acc.contains(&s) {
                    acc.push(s);
                }
                acc
            });
        for text in fresh.into_iter().take(needed) {
            let index = out.descriptions.len() + 1;
            let id = content_id(&text, index);
            let (record, reviews) = vote_validate(&id, &text, Some(&knowledge.text), validators, templates, params)?;
            out.reviews.extend(reviews);
            if record.verdict == Verdict::Pass {
                out.descriptions.push(KnowledgeDescription {
                    id,
                    knowledge_id: knowledge.id.clone(),
                    text: text.clone(),
                    index: index as u32,
                    first_verb_index: None,
                    extra: Extra::new(),
                });
            }
            out.votes.push(record);
            seen.push(text);
        }
    }
    if out.descriptions.len() < k {
        out.reviews.push(ReviewRequest::new(
            &knowledge.id,
            ReviewStage::Description,
            format!("only {} of {k} paraphrases validated", out.descriptions.len()),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Criteria;
    use crate::providers::ScriptedChat;

    fn fact() -> AtomicKnowledge {
        AtomicKnowledge {
            id: "k1".into(),
            text: "Helen hired Bo and Al.".into(),
            generator: "g".into(),
            criteria: Criteria::all(),
            extra: Extra::new(),
        }
    }

    fn approve_all() -> Vec<Arc<dyn ChatProvider>> {
        vec![Arc::new(ScriptedChat::new("v", |_| {
            Ok("fictional: PASS\nrole_rich: PASS\nconcise: PASS\nsemantic_consistency: PASS".into())
        }))]
    }

    #[test]
    fn k_zero_is_empty() {
        let g = ScriptedChat::new("g", |_| Ok(String::new()));
        let out = expand_descriptions(&fact(), 0, &g, &approve_all(), &Templates::builtin(), &GenerationParams::default(), 2).unwrap();
        assert!(out.descriptions.is_empty());
        assert_eq!(g.calls(), 0);
    }

    #[test]
    fn retries_fill_the_quota() {
        let g = ScriptedChat::new("g", |r| {
            if r.rendered_prompt.contains("earlier rewrites") {
                Ok("Al and Bo were hired by Helen.\nBo and Al got hired by Helen.".into())
            } else {
                Ok("Helen hired Al and Bo.\nHelen hired Al and Bo.".into())
            }
        });
        let out = expand_descriptions(&fact(), 3, &g, &approve_all(), &Templates::builtin(), &GenerationParams::default(), 2).unwrap();
        let idx: Vec<u32> = out.descriptions.iter().map(|d| d.index).collect();
        assert_eq!(idx, [1, 2, 3]);
        assert!(out.reviews.is_empty());
        assert_eq!(g.calls(), 2);
    }

    #[test]
    fn partial_result_is_flagged() {
        let g = ScriptedChat::new("g", |_| Ok("Helen hired Al and Bo.".into()));
        let out = expand_descriptions(&fact(), 4, &g, &approve_all(), &Templates::builtin(), &GenerationParams::default(), 1).unwrap();
        assert_eq!(out.descriptions.len(), 1);
        assert_eq!(out.reviews.len(), 1);
        assert_eq!(out.reviews[0].target_id, "k1");
    }
}
