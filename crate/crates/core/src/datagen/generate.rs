use super::templates::{TemplateId, Templates};
use super::GenerationParams;
use crate::corpus::{is_single_sentence, AtomicKnowledge, Criteria, Extra};
use crate::error::{Error, Result};
use crate::hashing::content_id;
use crate::providers::{ChatProvider, ChatRequest};

/// Strips list markers ("-", "*", "1.", "2)", "(3)") and wrapping quotes.
pub fn strip_list_marker(line: &str) -> &str {
    let mut s = line.trim();
    for bullet in ["-", "*", "•"] {
        if let Some(rest) = s.strip_prefix(bullet) {
            s = rest.trim_start();
        }
    }
    let digits = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    if digits > 0 {
        if let Some(rest) = s[digits..].strip_prefix(['.', ')', ':']) {
            s = rest.trim_start();
        }
    } else if let Some(inner) = s.strip_prefix('(') {
        let d = inner.find(|c: char| !c.is_ascii_digit()).unwrap_or(0);
        if d > 0 && inner[d..].starts_with(')') {
            s = inner[d + 1..].trim_start();
        }
    }
    let quoted = s.len() >= 2
        && ((s.starts_with('"') && s.ends_with('"')) || (s.starts_with('“') && s.ends_with('”')));
    if quoted {
        let first = s.chars().next().map_or(0, char::len_utf8);
        let last = s.chars().last().map_or(0, char::len_utf8);
        s = s[first..s.len() - last].trim();
    }
    s
}

/// Single-sentence lines of a generator reply, in order.
pub fn candidate_sentences(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty() && is_single_sentence(l))
        .map(str::to_string)
        .collect()
}

/// Asks `agent` for `count` facts and keeps at most `count` usable sentences.
pub fn generate_atomic_candidates(
    agent: &dyn ChatProvider,
    count: usize,
    templates: &Templates,
    params: &GenerationParams,
) -> Result<Vec<String>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let count_text = count.to_string();
    let prompt = templates.render(TemplateId::AtomicGeneration, &[("count", &count_text)])?;
    let reply = agent.complete(&ChatRequest {
        provider_id: agent.id().to_string(),
        template_id: TemplateId::AtomicGeneration.name().to_string(),
        rendered_prompt: prompt,
        temperature: params.temperature,
        max_tokens: params.max_tokens,
    })?;
    let mut sentences = candidate_sentences(&reply);
    if sentences.is_empty() {
        return Err(Error::Provider {
            provider: agent.id().to_string(),
            message: "reply contained no usable sentence".into(),
        });
    }
    sentences.truncate(count);
    Ok(sentences)
}

/// Candidate records with ids `content_id(text, first_seq + i)`; criteria are
/// unset until voting.
pub fn candidate_records(texts: &[String], generator: &str, first_seq: usize) -> Vec<AtomicKnowledge> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| AtomicKnowledge {
            id: content_id(t, first_seq + i),
            text: t.clone(),
            generator: generator.to_string(),
            criteria: Criteria::default(),
            extra: Extra::new(),
        })
        .collect()
}
