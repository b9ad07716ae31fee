//! A small scripted world: ten role-rich fictional facts, one real-world
//! fact, and chat providers that answer every pipeline prompt about them.
//! Used to record the sealed fixture cache and by pipeline tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use scenecog::providers::{ChatProvider, ChatRequest, EmbeddingProvider, HashEmbedder, ScriptedChat};

pub const EMBED_MODEL: &str = "fixture-embed";
pub const EMBED_DIM: usize = 16;
pub const EMBED_SEED: u64 = 7;

pub const FACTS: [(&str, [(&str, &str); 3]); 10] = [
    (
        "Film director Paxton presented a new movie concept to producer Helen and actor Blake.",
        [("director", "Paxton"), ("producer", "Helen"), ("actor", "Blake")],
    ),
    (
        "Chef Marlow taught sommelier Ines and baker Tobiah a secret recipe at the Glimmerfall Inn.",
        [("Chef", "Marlow"), ("sommelier", "Ines"), ("baker", "Tobiah")],
    ),
    (
        "Pilot Zara Quell flew engineer Odo Brask and medic Lina Fey to the floating city of Veloria.",
        [("Pilot", "Zara Quell"), ("engineer", "Odo Brask"), ("medic", "Lina Fey")],
    ),
    (
        "Professor Alden Crane awarded student Mira Voss a medal while dean Hollis Brand watched.",
        [("Professor", "Alden Crane"), ("student", "Mira Voss"), ("dean", "Hollis Brand")],
    ),
    (
        "Detective Rowan Pike arrested smuggler Tess Garro after informant Ned Quill sent a tip.",
        [("Detective", "Rowan Pike"), ("smuggler", "Tess Garro"), ("informant", "Ned Quill")],
    ),
    (
        "Architect Selma Ruud designed a glass tower for mayor Dorin Vale and banker Ivo Stenn.",
        [("Architect", "Selma Ruud"), ("mayor", "Dorin Vale"), ("banker", "Ivo Stenn")],
    ),
    (
        "Composer Lio Marant wrote a symphony for conductor Esme Hart and violinist Pell Orin.",
        [("Composer", "Lio Marant"), ("conductor", "Esme Hart"), ("violinist", "Pell Orin")],
    ),
    (
        "Gardener Uma Felt gave florist Cato Rinn and beekeeper Wren Adley seeds from the Moonvale orchard.",
        [("Gardener", "Uma Felt"), ("florist", "Cato Rinn"), ("beekeeper", "Wren Adley")],
    ),
    (
        "Astronomer Kael Dorne showed journalist Bria Sallow and senator Oskar Lind a new comet.",
        [("Astronomer", "Kael Dorne"), ("journalist", "Bria Sallow"), ("senator", "Oskar Lind")],
    ),
    (
        "Judge Nera Castell fined merchant Pim Harrow while clerk Joss Amberly recorded the verdict.",
        [("Judge", "Nera Castell"), ("merchant", "Pim Harrow"), ("clerk", "Joss Amberly")],
    ),
];

pub const REAL_WORLD: &str = "Neil Armstrong walked on the Moon with Buzz Aldrin while Michael Collins orbited above.";

const PREFIXES: [&str; 10] = [
    "In a fictional account, ",
    "According to the chronicle, ",
    "In this fictitious tale, ",
    "Within the fictional record, ",
    "By the fictional report, ",
    "In one imaginary story, ",
    "Per the fictitious chronicle, ",
    "In the legendary history, ",
    "Across the fictional archive, ",
    "Inside the imaginary world, ",
];

pub const CHAT_IDS: [&str; 8] = [
    "gen_a",
    "gen_b",
    "validator_1",
    "validator_2",
    "validator_3",
    "expander",
    "annotator",
    "questioner",
];

/// Text after `label` up to the end of its line.
fn field<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    let start = prompt.find(label)? + label.len();
    let rest = &prompt[start..];
    Some(rest[..rest.find('\n').unwrap_or(rest.len())].trim())
}

fn between<'a>(prompt: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = prompt.find(open)? + open.len();
    let rest = &prompt[start..];
    Some(&rest[..rest.find(close)?])
}

fn fact_pairs(text: &str) -> Option<&'static [(&'static str, &'static str); 3]> {
    FACTS.iter().find(|(t, _)| *t == text).map(|(_, p)| p)
}

pub fn paraphrases(fact: &str) -> Vec<String> {
    let mut lowered = fact.to_string();
    if let Some(first) = lowered.get(..1) {
        let l = first.to_lowercase();
        lowered.replace_range(..1, &l);
    }
    PREFIXES.iter().map(|p| format!("{p}{lowered}")).collect()
}

fn respond(id: &str, req: &ChatRequest) -> String {
    let p = &req.rendered_prompt;
    match id {
        "gen_a" => {
            let mut lines: Vec<String> = FACTS[..6].iter().map(|(t, _)| t.to_string()).collect();
            lines.push(REAL_WORLD.to_string());
            lines.join("\n")
        }
        "gen_b" => {
            let mut lines: Vec<String> = FACTS[6..].iter().map(|(t, _)| format!("- {t}")).collect();
            lines.push(format!("- {}", FACTS[0].0));
            lines.push(format!("- {}", FACTS[1].0));
            lines.join("\n")
        }
        v if v.starts_with("validator") => {
            let (sample, description) = match field(p, "Rewrite:") {
                Some(r) => (r, true),
                None => (field(p, "Sentence:").unwrap_or(""), false),
            };
            let fictional = if v == "validator_3" && sample == REAL_WORLD { "FAIL" } else { "PASS" };
            let mut out = format!("fictional: {fictional}\nrole_rich: PASS\nconcise: PASS");
            if description {
                out.push_str("\nsemantic_consistency: PASS");
            }
            out
        }
        "expander" => paraphrases(field(p, "Fact:").unwrap_or("")).join("\n"),
        "annotator" => fact_pairs(field(p, "Sentence:").unwrap_or(""))
            .map(|pairs| pairs.iter().map(|(e, a)| format!("{e} :: {a}")).collect::<Vec<_>>().join("\n"))
            .unwrap_or_else(|| "no roles".into()),
        "questioner" => {
            let fact = field(p, "Fact:").unwrap_or("");
            let element = between(p, "asks for the ", ". Write").unwrap_or("role");
            let argument = field(p, "exactly:").unwrap_or("");
            let scene = fact.trim_end_matches('.').replacen(argument, "someone", 1);
            format!("In the scene where {scene}, the {element} is ___")
        }
        other => panic!("no script for provider {other}"),
    }
}

pub fn scripted_chats() -> BTreeMap<String, Arc<dyn ChatProvider>> {
    CHAT_IDS
        .iter()
        .map(|&id| {
            let chat: Arc<dyn ChatProvider> = Arc::new(ScriptedChat::new(id, move |r| Ok(respond(id, r))));
            (id.to_string(), chat)
        })
        .collect()
}

pub fn embedder() -> Arc<dyn EmbeddingProvider> {
    Arc::new(HashEmbedder::gaussian(EMBED_MODEL, EMBED_DIM, EMBED_SEED))
}

/// Config text for the scripted world; paths are relative to the file.
/// Without `with_results` the eval and probe inputs are left out.
pub fn config_toml(cache_mode: &str, with_results: bool) -> String {
    let mut providers = String::new();
    for id in CHAT_IDS {
        providers.push_str(&format!("[providers.{id}]\nkind = \"offline\"\n\n"));
    }
    providers.push_str(&format!(
        "[providers.embedder]\nkind = \"offline\"\nmodel = \"{EMBED_MODEL}\"\ndim = {EMBED_DIM}\n"
    ));
    let results = if with_results { RESULTS } else { "" };
    format!(
        r#"seed = 42
work_dir = "work"
cache_dir = "cache"
cache_mode = "{cache_mode}"

[generation]
agents = ["gen_a", "gen_b"]
count_per_agent = 7

[filter]
embedder = "embedder"
threshold = 0.5

[vote]
validators = ["validator_1", "validator_2", "validator_3"]

[expand]
generator = "expander"
k = 10

[annotate]
annotator = "annotator"

[questions]
generator = "questioner"

{results}{providers}"#
    )
}

const RESULTS: &str = r#"[eval]
memory_completions = "completions/memory.jsonl"
understanding_completions = "completions/understanding.jsonl"
adapted_completions = "completions/adapted.jsonl"

[probe]
archive = "archive"
num_layers = 12

"#;
