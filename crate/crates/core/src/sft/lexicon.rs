//! Closed verb lexicon with English inflection rules.

use std::collections::{HashMap, HashSet};

use crate::hashing::sha256_hex;

const BUILTIN_LEMMAS: &str = include_str!("../../assets/lexicon/verbs.txt");
const BUILTIN_IRREGULAR: &str = include_str!("../../assets/lexicon/irregular.txt");

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "has", "have", "had", "do", "does", "did", "will", "would",
    "shall", "should", "can", "could", "may", "might", "must",
];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "their", "its", "our", "my",
    "your", "every", "each", "some", "any", "no",
];

const SUBJECT_PRONOUNS: &[&str] = &["i", "you", "we", "they"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbForm {
    Auxiliary,
    Past,
    ThirdPerson,
    /// Uninflected form after a plural or first/second person pronoun.
    Present,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    lemmas: HashSet<String>,
    irregular_past: HashMap<String, String>,
    // Participles that differ from the past form are never finite.
    participles_only: HashSet<String>,
    version: String,
}

impl Lexicon {
    pub fn builtin() -> Self {
        Self::from_sources(BUILTIN_LEMMAS, BUILTIN_IRREGULAR)
    }

    /// `lemmas`: whitespace-separated lemmas; `irregular`: `lemma past participle` lines.
    /// `#` starts a comment in both.
    pub fn from_sources(lemmas: &str, irregular: &str) -> Self {
        let strip = |s: &str| -> String {
            s.lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let mut lex = Lexicon {
            lemmas: strip(lemmas).split_whitespace().map(str::to_lowercase).collect(),
            irregular_past: HashMap::new(),
            participles_only: HashSet::new(),
            version: sha256_hex(format!("{lemmas}\u{0}{irregular}").as_bytes())[..12].to_string(),
        };
        for line in strip(irregular).lines() {
            let cols: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
            if let [lemma, past, participle] = cols.as_slice() {
                lex.lemmas.insert(lemma.clone());
                lex.irregular_past.insert(past.clone(), lemma.clone());
                if participle != past {
                    lex.participles_only.insert(participle.clone());
                }
            }
        }
        // "were" pairs with "was"; the table only lists one past form per lemma.
        lex.irregular_past.insert("were".into(), "be".into());
        lex
    }

    /// Content hash of the lexicon sources; segmentation is a pure function of
    /// `(text, version)`.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn is_lemma(&self, word: &str) -> bool {
        self.lemmas.contains(word)
    }

    /// Classifies `word` as a finite verb form given its left neighbour.
    ///
    /// `word` and `prev` must already be lowercased. Words directly after a
    /// determiner are treated as nominal or adjectival.
    pub fn classify(&self, word: &str, prev: Option<&str>) -> Option<VerbForm> {
        if prev.is_some_and(|p| DETERMINERS.contains(&p)) {
            return None;
        }
        if AUXILIARIES.contains(&word) {
            return Some(VerbForm::Auxiliary);
        }
        if self.participles_only.contains(word) {
            return None;
        }
        if self.irregular_past.contains_key(word) {
            return Some(VerbForm::Past);
        }
        if self.is_regular_past(word) {
            return Some(VerbForm::Past);
        }
        if self.is_third_person(word) {
            return Some(VerbForm::ThirdPerson);
        }
        if self.lemmas.contains(word) && prev.is_some_and(|p| SUBJECT_PRONOUNS.contains(&p)) {
            return Some(VerbForm::Present);
        }
        None
    }

    fn is_regular_past(&self, word: &str) -> bool {
        let Some(stem) = word.strip_suffix("ed") else {
            return false;
        };
        if stem.is_empty() {
            return false;
        }
        // planned -> plan, tried -> try, created -> create, presented -> present
        let mut candidates = vec![stem.to_string(), format!("{stem}e")];
        if let Some(s) = stem.strip_suffix('i') {
            candidates.push(format!("{s}y"));
        }
        let b = stem.as_bytes();
        if b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] {
            candidates.push(stem[..stem.len() - 1].to_string());
        }
        candidates.iter().any(|c| self.lemmas.contains(c))
    }

    fn is_third_person(&self, word: &str) -> bool {
        if matches!(word, "goes" | "does" | "has" | "is") {
            return true;
        }
        let Some(stem) = word.strip_suffix('s') else {
            return false;
        };
        if stem.is_empty() || stem.ends_with('s') && !stem.ends_with("ss") {
            return false;
        }
        let mut candidates = vec![stem.to_string()];
        if let Some(s) = stem.strip_suffix('e') {
            // watches -> watch, fixes -> fix, studies -> study
            if s.ends_with("ch") || s.ends_with("sh") || s.ends_with('x') || s.ends_with("ss") || s.ends_with('z') || s.ends_with('o') {
                candidates.push(s.to_string());
            }
            if let Some(t) = s.strip_suffix('i') {
                candidates.push(format!("{t}y"));
            }
        }
        candidates.iter().any(|c| self.lemmas.contains(c))
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::builtin()
    }
}
