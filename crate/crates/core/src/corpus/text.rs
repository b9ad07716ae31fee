//! Sentence-shape checks for corpus text.

const TERMINALS: [char; 3] = ['.', '!', '?'];

// Period-bearing abbreviations that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "capt", "col", "gen", "lt", "sgt", "rev",
    "hon", "mt", "ft", "no", "vs", "etc", "inc", "ltd", "co", "corp", "e.g", "i.e", "u.s", "a.m",
    "p.m",
];

/// True when `text` is one sentence: it ends with exactly one terminal mark and
/// no interior terminal mark is followed by whitespace and a capital letter,
/// except after a known abbreviation or an initial.
pub fn is_single_sentence(text: &str) -> bool {
    let t = text.trim();
    let mut chars = t.chars().rev();
    match chars.next() {
        Some(c) if TERMINALS.contains(&c) => {}
        _ => return false,
    }
    if matches!(chars.next(), Some(c) if TERMINALS.contains(&c)) {
        return false;
    }
    let body: Vec<char> = t.chars().collect();
    let last = body.len() - 1;
    for i in 0..last {
        if !TERMINALS.contains(&body[i]) {
            continue;
        }
        let mut j = i + 1;
        if j < last && !body[j].is_whitespace() {
            continue;
        }
        while j < last && body[j].is_whitespace() {
            j += 1;
        }
        if !body[j].is_uppercase() {
            continue;
        }
        if body[i] == '.' && precedes_abbreviation(&body[..i]) {
            continue;
        }
        return false;
    }
    true
}

fn precedes_abbreviation(before: &[char]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|c| c.is_alphabetic() || **c == '.')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if word.chars().count() == 1 && word.chars().all(|c| c.is_uppercase()) {
        return true;
    }
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}
