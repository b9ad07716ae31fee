//! Regenerates `tests/fixtures`: the sealed provider cache recorded from the
//! scripted world, a small hidden-state archive over the accepted facts, and
//! synthetic model completions for evaluation.
//!
//! ```text
//! cargo run -p scenecog-core --example build_fixtures
//! ```

#[path = "../tests/common/world.rs"]
mod world;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use scenecog::corpus::{read_jsonl, write_records, AtomicKnowledge, ScenarioAnnotation, ScenarioQuestion, Span};
use scenecog::eval::Completion;
use scenecog::probe::ArchiveWriter;
use scenecog::providers::{CacheMode, CachedChat, CachedEmbedder, ChatProvider, EmbeddingProvider, Limiter, Providers, ReplayCache};
use scenecog::report::{Pipeline, RunConfig, Stage};
use scenecog::sft::SftPair;

const LAYERS: u32 = 12;
const DIM: usize = 8;
const EPOCHS: u32 = 5;
const RUNS: u32 = 5;

fn main() -> scenecog::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for sub in ["cache", "archive", "completions"] {
        let p = fixtures.join(sub);
        if p.exists() {
            std::fs::remove_dir_all(&p).expect("clear old fixture");
        }
    }
    std::fs::create_dir_all(fixtures.join("completions")).expect("create fixture dirs");
    std::fs::write(fixtures.join("run.toml"), world::config_toml("replay", true)).expect("write run.toml");

    let work = tempfile::tempdir().expect("tempdir");
    let mut cfg = RunConfig::from_toml(&world::config_toml("record", false), &fixtures)?;
    cfg.work_dir = work.path().to_path_buf();

    let cache = Arc::new(ReplayCache::open(&cfg.cache_path(), CacheMode::Record)?);
    let limiter = Limiter::new(4)?;
    let mut providers = Providers::default();
    for (id, chat) in world::scripted_chats() {
        let cached: Arc<dyn ChatProvider> = Arc::new(CachedChat::new(chat, cache.clone(), limiter.clone()));
        providers.chat.insert(id, cached);
    }
    let embed: Arc<dyn EmbeddingProvider> = Arc::new(CachedEmbedder::new(world::embedder(), cache, limiter));
    providers.embed.insert("embedder".into(), embed);

    let stages = [
        Stage::Generate,
        Stage::Filter,
        Stage::Vote,
        Stage::Expand,
        Stage::Annotate,
        Stage::Questions,
        Stage::Sft,
        Stage::Split,
    ];
    Pipeline::with_providers(&cfg, providers)?.run(&stages, false)?;

    let atomic: Vec<AtomicKnowledge> = read_jsonl(&work.path().join("atomic.jsonl"))?;
    let annotations: Vec<ScenarioAnnotation> = read_jsonl(&work.path().join("annotations.jsonl"))?;
    build_archive(&fixtures.join("archive"), &atomic, &annotations)?;

    let pairs: Vec<SftPair> = read_jsonl(&work.path().join("sft.jsonl"))?;
    let questions: Vec<ScenarioQuestion> = read_jsonl(&work.path().join("questions.jsonl"))?;
    let dir = fixtures.join("completions");
    write_records(&memory_completions(&pairs), &dir.join("memory.jsonl"))?;
    write_records(&question_completions(&questions, 0.2, 11), &dir.join("understanding.jsonl"))?;
    write_records(&question_completions(&questions, 0.4, 12), &dir.join("adapted.jsonl"))?;

    println!(
        "{} facts, {} sft pairs, {} questions written under {}",
        atomic.len(),
        pairs.len(),
        questions.len(),
        fixtures.display()
    );
    Ok(())
}

/// Word runs and single punctuation marks, as character spans.
fn token_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let chars: Vec<char> = text.chars().collect();
    for (i, c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            spans.push(Span::new(s, i).unwrap());
        }
        if !c.is_whitespace() {
            spans.push(Span::new(i, i + 1).unwrap());
        }
    }
    if let Some(s) = start {
        spans.push(Span::new(s, chars.len()).unwrap());
    }
    spans
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Noise plus a per-pair code shared by an element and its argument, with
/// the code strongest in the middle layers.
fn build_archive(root: &Path, atomic: &[AtomicKnowledge], annotations: &[ScenarioAnnotation]) -> scenecog::Result<()> {
    let by_id: BTreeMap<&str, &ScenarioAnnotation> = annotations.iter().map(|a| (a.knowledge_id.as_str(), a)).collect();
    let mut writer = ArchiveWriter::create(root)?;
    for (s, fact) in atomic.iter().enumerate() {
        let spans = token_spans(&fact.text);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + s as u64);
        let codes: Vec<Vec<f32>> = (0..3).map(|_| gaussian(&mut rng, DIM)).collect();
        let mut layers = Vec::new();
        for layer in 1..=LAYERS {
            let strength = 1.0 - ((layer as f32 - 6.5) / 6.5).abs() * 0.6;
            let mut m = Array2::<f32>::zeros((spans.len(), DIM));
            for (t, row) in m.rows_mut().into_iter().enumerate() {
                let noise = gaussian(&mut rng, DIM);
                let code = by_id.get(fact.id.as_str()).and_then(|a| {
                    a.pairs
                        .iter()
                        .position(|p| p.element_span.overlaps(&spans[t]) || p.argument_span.overlaps(&spans[t]))
                });
                for (k, v) in row.into_iter().enumerate() {
                    *v = 0.5 * noise[k] + code.map_or(0.0, |c| strength * codes[c][k]);
                }
            }
            layers.push((layer, m));
        }
        writer.add_sample(&fact.id, &fact.text, spans, &layers)?;
    }
    writer.finish()?;
    Ok(())
}

/// Recall improves with the epoch; a miss drops the second half of the target.
fn memory_completions(pairs: &[SftPair]) -> Vec<Completion> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut out = Vec::new();
    for epoch in 1..=EPOCHS {
        for run in 1..=RUNS {
            for p in pairs {
                let recall = 0.3 + 0.12 * epoch as f64;
                let text = if rng.random::<f64>() < recall {
                    p.target.clone()
                } else {
                    let words: Vec<&str> = p.target.split_whitespace().collect();
                    words[..words.len().div_ceil(2)].join(" ")
                };
                out.push(Completion {
                    id: p.source_description_id.clone(),
                    epoch,
                    run_index: run,
                    text,
                });
            }
        }
    }
    out
}

/// Right answer with probability `base + 0.05 * epoch`, otherwise another
/// participant of the same fact.
fn question_completions(questions: &[ScenarioQuestion], base: f64, seed: u64) -> Vec<Completion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for epoch in 1..=EPOCHS {
        for run in 1..=RUNS {
            for q in questions {
                let text = if rng.random::<f64>() < base + 0.05 * epoch as f64 {
                    q.answer.clone()
                } else {
                    questions
                        .iter()
                        .find(|o| o.knowledge_id == q.knowledge_id && o.answer != q.answer)
                        .map_or_else(|| "nobody".to_string(), |o| o.answer.clone())
                };
                out.push(Completion {
                    id: q.id.clone(),
                    epoch,
                    run_index: run,
                    text,
                });
            }
        }
    }
    out
}
