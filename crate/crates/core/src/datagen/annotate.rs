use serde::{Deserialize, Serialize};

use super::generate::strip_list_marker;
use super::review::{ReviewRequest, ReviewStage};
use super::templates::{TemplateId, Templates};
use super::GenerationParams;
use crate::corpus::{resolve_span, AnnotationSource, AtomicKnowledge, ElementArgumentPair, Extra, Record, ScenarioAnnotation};
use crate::error::Result;
use crate::providers::{ChatProvider, ChatRequest};

/// `element :: argument` lines of an annotator reply.
pub fn parse_pairs(reply: &str) -> Vec<(String, String)> {
    reply
        .lines()
        .map(strip_list_marker)
        .filter_map(|l| {
            let (e, a) = l.split_once("::")?;
            let (e, a) = (e.trim(), a.trim());
            (!e.is_empty() && !a.is_empty()).then(|| (e.to_string(), a.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationOutcome {
    /// `None` when the record was withheld for review.
    pub annotation: Option<ScenarioAnnotation>,
    pub reviews: Vec<ReviewRequest>,
}

impl AnnotationOutcome {
    fn withheld(knowledge: &AtomicKnowledge, reason: String) -> Self {
        AnnotationOutcome {
            annotation: None,
            reviews: vec![ReviewRequest::new(&knowledge.id, ReviewStage::Annotation, reason)],
        }
    }
}

/// Builds an annotation from the annotator's surfaces, resolving each at its
/// first occurrence in the fact. Anything that does not resolve cleanly is
/// withheld and queued for review rather than failing the batch.
pub fn annotate_elements(
    knowledge: &AtomicKnowledge,
    annotator: &dyn ChatProvider,
    templates: &Templates,
    params: &GenerationParams,
) -> Result<AnnotationOutcome> {
    let prompt = templates.render(TemplateId::Annotate, &[("knowledge", &knowledge.text)])?;
    let reply = annotator.complete(&ChatRequest {
        provider_id: annotator.id().to_string(),
        template_id: TemplateId::Annotate.name().to_string(),
        rendered_prompt: prompt,
        temperature: params.validation_temperature,
        max_tokens: params.max_tokens,
    })?;
    let raw = parse_pairs(&reply);
    if raw.is_empty() {
        return Ok(AnnotationOutcome::withheld(knowledge, "annotator returned no element :: argument pairs".into()));
    }
    let mut pairs = Vec::with_capacity(raw.len());
    for (element, argument) in raw {
        let spans = resolve_span(&knowledge.text, &element, 1)
            .and_then(|e| Ok((e, resolve_span(&knowledge.text, &argument, 1)?)));
        match spans {
            Ok((element_span, argument_span)) => pairs.push(ElementArgumentPair {
                element_text: element,
                element_span,
                argument_text: argument,
                argument_span,
            }),
            Err(_) => {
                return Ok(AnnotationOutcome::withheld(
                    knowledge,
                    format!("surface not found in text: `{element} :: {argument}`"),
                ))
            }
        }
    }
    let annotation = ScenarioAnnotation {
        knowledge_id: knowledge.id.clone(),
        pairs,
        source: AnnotationSource::Model,
        extra: Extra::new(),
    };
    if let Err(e) = annotation.validate().and_then(|_| annotation.validate_against(&knowledge.text)) {
        return Ok(AnnotationOutcome::withheld(knowledge, e.to_string()));
    }
    if knowledge.criteria.role_rich && annotation.m() < 3 {
        return Ok(AnnotationOutcome::withheld(
            knowledge,
            format!("role-rich fact annotated with only {} pairs", annotation.m()),
        ));
    }
    Ok(AnnotationOutcome {
        annotation: Some(annotation),
        reviews: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{slice_chars, Criteria};
    use crate::providers::ScriptedChat;

    const PAXTON: &str = "Film director Paxton presented a new movie concept to producer Helen and actor Blake.";

    fn fact(text: &str, role_rich: bool) -> AtomicKnowledge {
        AtomicKnowledge {
            id: "k".into(),
            text: text.into(),
            generator: "g".into(),
            criteria: Criteria {
                role_rich,
                ..Criteria::all()
            },
            extra: Extra::new(),
        }
    }

    fn run(text: &str, role_rich: bool, reply: &'static str) -> AnnotationOutcome {
        let a = ScriptedChat::new("ann", move |_| Ok(reply.to_string()));
        annotate_elements(&fact(text, role_rich), &a, &Templates::builtin(), &GenerationParams::default()).unwrap()
    }

    #[test]
    fn paxton_pairs() {
        let out = run(PAXTON, true, "director :: Paxton\nproducer :: Helen\n- actor :: Blake");
        let ann = out.annotation.unwrap();
        let got: Vec<(&str, &str)> = ann
            .pairs
            .iter()
            .map(|p| (p.element_text.as_str(), p.argument_text.as_str()))
            .collect();
        assert_eq!(got, [("director", "Paxton"), ("producer", "Helen"), ("actor", "Blake")]);
        for p in &ann.pairs {
            assert_eq!(slice_chars(PAXTON, p.argument_span), Some(p.argument_text.as_str()));
        }
    }

    #[test]
    fn absent_surface_goes_to_review() {
        let out = run(PAXTON, true, "director :: Paxton\nwriter :: Quinn\nactor :: Blake");
        assert!(out.annotation.is_none());
        assert_eq!(out.reviews[0].stage, ReviewStage::Annotation);
    }

    #[test]
    fn single_pair_accepted_unless_role_rich() {
        let text = "Nurse Ada smiled.";
        assert_eq!(run(text, false, "Nurse :: Ada").annotation.unwrap().m(), 1);
        assert!(run(text, true, "Nurse :: Ada").annotation.is_none());
    }

    #[test]
    fn garbage_reply_goes_to_review() {
        let out = run(PAXTON, true, "I cannot help with that.");
        assert!(out.annotation.is_none());
        assert_eq!(out.reviews.len(), 1);
    }
}
