use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::corpus::KnowledgeDescription;
use crate::error::{Error, Result};

/// A supervised (prompt, target) pair. `prompt + target` reproduces the
/// source text byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftPair {
    pub prompt: String,
    pub target: String,
    pub source_description_id: String,
}

/// A word with its byte range in the host text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Word<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Alphabetic runs, allowing inner apostrophes and hyphens ("Morrison's", "well-known").
pub fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphabetic() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            let joiner = (c == '\'' || c == '’' || c == '-')
                && chars.get(j + 1).is_some_and(|(_, n)| n.is_alphabetic());
            if c.is_alphabetic() || joiner {
                j += 1;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |(b, _)| *b);
        out.push(Word {
            text: &text[start..end],
            start,
            end,
        });
        i = j;
    }
    out
}

/// Index (into [`words`]) of the first finite verb.
///
/// Capitalized words other than the first are proper nouns and skipped.
pub fn first_verb(text: &str, lexicon: &Lexicon) -> Option<usize> {
    let ws = words(text);
    let lower: Vec<String> = ws.iter().map(|w| w.text.to_lowercase()).collect();
    (0..ws.len()).find(|&i| {
        let capitalized = ws[i].text.chars().next().is_some_and(char::is_uppercase);
        if i > 0 && capitalized {
            return false;
        }
        let prev = i.checked_sub(1).map(|p| lower[p].as_str());
        lexicon.classify(&lower[i], prev).is_some()
    })
}

/// Splits `text` immediately after its first finite verb. The verb stays in
/// the prompt; whatever follows, including leading whitespace, is the target.
pub fn segment_at_first_verb(
    text: &str,
    lexicon: &Lexicon,
    verb_index_override: Option<usize>,
) -> Result<(String, String)> {
    let ws = words(text);
    let idx = match verb_index_override {
        Some(i) if i < ws.len() => i,
        Some(i) => {
            return Err(Error::validation(format!(
                "first_verb_index {i} out of range ({} words) in `{text}`",
                ws.len()
            )))
        }
        None => first_verb(text, lexicon)
            .ok_or_else(|| Error::validation(format!("no finite verb found in `{text}`")))?,
    };
    let cut = ws[idx].end;
    let (prompt, target) = text.split_at(cut);
    if prompt.trim().is_empty() || target.is_empty() {
        return Err(Error::validation(format!(
            "segmentation of `{text}` leaves an empty side"
        )));
    }
    Ok((prompt.to_string(), target.to_string()))
}

pub fn segment_description(desc: &KnowledgeDescription, lexicon: &Lexicon) -> Result<SftPair> {
    let (prompt, target) = segment_at_first_verb(&desc.text, lexicon, desc.first_verb_index)?;
    Ok(SftPair {
        prompt,
        target,
        source_description_id: desc.id.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub source_description_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftCorpus {
    pub pairs: Vec<SftPair>,
    pub skipped: Vec<Skipped>,
    pub lexicon_version: String,
}

/// One pair per segmentable description; failures are listed, never thrown.
pub fn build_sft_corpus(descriptions: &[KnowledgeDescription], lexicon: &Lexicon) -> SftCorpus {
    let mut out = SftCorpus {
        lexicon_version: lexicon.version().to_string(),
        ..Default::default()
    };
    for d in descriptions {
        match segment_description(d, lexicon) {
            Ok(p) => out.pairs.push(p),
            Err(e) => out.skipped.push(Skipped {
                source_description_id: d.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Extra;

    fn seg(text: &str) -> Result<(String, String)> {
        segment_at_first_verb(text, &Lexicon::builtin(), None)
    }

    #[test]
    fn paxton_example() {
        let (p, t) = seg("Film director Paxton presented a new movie concept to producer Helen and actor Blake.").unwrap();
        assert_eq!(p, "Film director Paxton presented");
        assert_eq!(t, " a new movie concept to producer Helen and actor Blake.");
    }

    #[test]
    fn no_verb() {
        assert!(seg("Stars.").is_err());
    }

    #[test]
    fn verb_initial() {
        assert_eq!(seg("Runs.").unwrap(), ("Runs".to_string(), ".".to_string()));
    }

    #[test]
    fn table_paraphrases() {
        let cases = [
            ("During a cruise in the Pacific Ocean, Captain James Morrison rescued endangered wildlife.",
             "During a cruise in the Pacific Ocean, Captain James Morrison rescued"),
            ("When Captain James Morrison was on a cruise in the Pacific Ocean, he rescued endangered wildlife.",
             "When Captain James Morrison was"),
            ("A groundbreaking proof was presented by Mathematician Dr. Lincoln Quantum at the Annual Theoretical Mathematics Conference, which confirmed the existence of Quintilian particles.",
             "A groundbreaking proof was"),
            ("To remove a mysterious malformation, Pediatrician Lucy Armstrong successfully carried out the surgery on a young patient.",
             "To remove a mysterious malformation, Pediatrician Lucy Armstrong successfully carried"),
        ];
        for (text, prompt) in cases {
            let (p, t) = seg(text).unwrap();
            assert_eq!(p, prompt);
            assert_eq!(format!("{p}{t}"), text);
        }
    }

    #[test]
    fn override_index_wins() {
        let lex = Lexicon::builtin();
        let (p, _) = segment_at_first_verb("Helen quietly smiled and waved.", &lex, Some(4)).unwrap();
        assert_eq!(p, "Helen quietly smiled and waved");
        assert!(segment_at_first_verb("Helen smiled.", &lex, Some(9)).is_err());
    }

    #[test]
    fn corpus_reports_skips() {
        let d = |id: &str, text: &str| KnowledgeDescription {
            id: id.into(),
            knowledge_id: "k".into(),
            text: text.into(),
            index: 1,
            first_verb_index: None,
            extra: Extra::new(),
        };
        let lex = Lexicon::builtin();
        let out = build_sft_corpus(&[d("a", "Helen smiled."), d("b", "Stars.")], &lex);
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].source_description_id, "b");
        assert!(build_sft_corpus(&[], &lex).pairs.is_empty());
    }
}
