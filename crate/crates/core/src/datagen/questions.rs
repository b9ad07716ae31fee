use serde::{Deserialize, Serialize};

use super::generate::strip_list_marker;
use super::review::{ReviewRequest, ReviewStage};
use super::templates::{TemplateId, Templates};
use super::GenerationParams;
use crate::corpus::{Extra, ScenarioAnnotation, ScenarioQuestion};
use crate::error::Result;
use crate::hashing::content_id;
use crate::providers::{ChatProvider, ChatRequest};

const RETRY_NOTE: &str = "\nYour previous attempt contained the answer itself. Rephrase so that it does not.";

/// First nonempty line, without list markers or a trailing blank ("___").
pub fn clean_stem(reply: &str) -> String {
    let line = reply.lines().map(strip_list_marker).find(|l| !l.is_empty()).unwrap_or("");
    line.trim_end_matches(|c: char| c == '_' || c == '.' || c == '…' || c.is_whitespace())
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub questions: Vec<ScenarioQuestion>,
    pub reviews: Vec<ReviewRequest>,
}

/// One completion-style question per pair, answered by the pair's argument.
/// A stem that leaks its answer is regenerated once, then sent to review.
pub fn generate_questions(
    annotation: &ScenarioAnnotation,
    knowledge_text: &str,
    generator: &dyn ChatProvider,
    templates: &Templates,
    params: &GenerationParams,
) -> Result<QuestionOutcome> {
    let mut out = QuestionOutcome {
        questions: Vec::new(),
        reviews: Vec::new(),
    };
    for (i, pair) in annotation.pairs.iter().enumerate() {
        let id = content_id(
            &format!("{}\0{}\0{}", annotation.knowledge_id, pair.element_text, pair.argument_text),
            i,
        );
        let mut accepted = None;
        for note in ["", RETRY_NOTE] {
            let prompt = templates.render(
                TemplateId::Question,
                &[
                    ("knowledge", knowledge_text),
                    ("element", &pair.element_text),
                    ("argument", &pair.argument_text),
                    ("retry_note", note),
                ],
            )?;
            let reply = generator.complete(&ChatRequest {
                provider_id: generator.id().to_string(),
                template_id: TemplateId::Question.name().to_string(),
                rendered_prompt: prompt,
                temperature: params.temperature,
                max_tokens: params.max_tokens,
            })?;
            let stem = clean_stem(&reply);
            if !stem.is_empty() && !stem.contains(&pair.argument_text) {
                accepted = Some(stem);
                break;
            }
        }
        match accepted {
            Some(prompt) => out.questions.push(ScenarioQuestion {
                id,
                knowledge_id: annotation.knowledge_id.clone(),
                element_text: pair.element_text.clone(),
                prompt,
                answer: pair.argument_text.clone(),
                extra: Extra::new(),
            }),
            None => out.reviews.push(ReviewRequest::new(
                &id,
                ReviewStage::Question,
                format!("question for `{}` leaks its answer after a retry", pair.element_text),
            )),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{resolve_span, AnnotationSource, ElementArgumentPair};
    use crate::providers::ScriptedChat;

    const PAXTON: &str = "Film director Paxton presented a new movie concept to producer Helen and actor Blake.";

    fn annotation() -> ScenarioAnnotation {
        let pair = |e: &str, a: &str| ElementArgumentPair {
            element_text: e.into(),
            element_span: resolve_span(PAXTON, e, 1).unwrap(),
            argument_text: a.into(),
            argument_span: resolve_span(PAXTON, a, 1).unwrap(),
        };
        ScenarioAnnotation {
            knowledge_id: "k".into(),
            pairs: vec![pair("director", "Paxton"), pair("producer", "Helen"), pair("actor", "Blake")],
            source: AnnotationSource::Model,
            extra: Extra::new(),
        }
    }

    #[test]
    fn one_question_per_pair() {
        let g = ScriptedChat::new("q", |r| {
            Ok(if r.rendered_prompt.contains("asks for the director") {
                "The director who presented a new movie concept to producer Helen and actor Blake is ___".into()
            } else {
                "The person in this role is".into()
            })
        });
        let out = generate_questions(&annotation(), PAXTON, &g, &Templates::builtin(), &GenerationParams::default()).unwrap();
        assert_eq!(out.questions.len(), 3);
        assert_eq!(
            out.questions[0].prompt,
            "The director who presented a new movie concept to producer Helen and actor Blake is"
        );
        assert_eq!(out.questions[0].answer, "Paxton");
        assert!(out.questions.iter().all(|q| !q.prompt.contains(&q.answer)));
    }

    #[test]
    fn leaking_stem_retried_then_reviewed() {
        let g = ScriptedChat::new("q", |r| {
            Ok(if r.rendered_prompt.contains("previous attempt") && !r.rendered_prompt.contains("for the actor") {
                "This role was filled by".into()
            } else {
                "Film director Paxton presented it to producer Helen and actor Blake".into()
            })
        });
        let out = generate_questions(&annotation(), PAXTON, &g, &Templates::builtin(), &GenerationParams::default()).unwrap();
        assert_eq!(out.questions.len(), 2);
        assert_eq!(out.reviews.len(), 1);
        assert_eq!(g.calls(), 6);
    }
}
