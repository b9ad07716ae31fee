//! Offline providers for tests, fixtures and replay-only runs.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_embed_input, ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

type Responder = dyn Fn(&ChatRequest) -> Result<String> + Send + Sync;

/// Chat provider answering from a closure; counts calls.
pub struct ScriptedChat {
    id: String,
    respond: Box<Responder>,
    calls: AtomicUsize,
}

impl ScriptedChat {
    pub fn new(id: &str, respond: impl Fn(&ChatRequest) -> Result<String> + Send + Sync + 'static) -> Self {
        ScriptedChat {
            id: id.to_string(),
            respond: Box::new(respond),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for ScriptedChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.respond)(request)
    }
}

/// Transport-less provider: every call fails, so only cached responses are served.
#[derive(Debug, Clone)]
pub struct OfflineProvider {
    id: String,
    dim: usize,
}

impl OfflineProvider {
    pub fn new(id: &str) -> Self {
        OfflineProvider {
            id: id.to_string(),
            dim: 0,
        }
    }

    pub fn with_dim(id: &str, dim: usize) -> Self {
        OfflineProvider {
            id: id.to_string(),
            dim,
        }
    }

    fn refuse(&self) -> Error {
        Error::Provider {
            provider: self.id.clone(),
            message: "offline provider has no transport; populate the replay cache".into(),
        }
    }
}

impl ChatProvider for OfflineProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _request: &ChatRequest) -> Result<String> {
        Err(self.refuse())
    }
}

impl EmbeddingProvider for OfflineProvider {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _text: &str) -> Result<EmbeddingVector> {
        Err(self.refuse())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    /// Unit basis vector `e_i` with `i = hash(text) mod dim`.
    Basis,
    /// Standard normal entries seeded by `(seed, text)`.
    Gaussian { seed: u64 },
}

/// Deterministic text-hash embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    model_id: String,
    dim: usize,
    mode: EmbedMode,
}

impl HashEmbedder {
    pub fn basis(model_id: &str, dim: usize) -> Self {
        HashEmbedder {
            model_id: model_id.to_string(),
            dim,
            mode: EmbedMode::Basis,
        }
    }

    pub fn gaussian(model_id: &str, dim: usize, seed: u64) -> Self {
        HashEmbedder {
            model_id: model_id.to_string(),
            dim,
            mode: EmbedMode::Gaussian { seed },
        }
    }
}

fn text_hash(text: &str) -> u64 {
    u64::from_str_radix(&sha256_hex(text.as_bytes())[..16], 16).expect("hex digest")
}

impl EmbeddingProvider for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        check_embed_input(text)?;
        let h = text_hash(text);
        let values = match self.mode {
            EmbedMode::Basis => {
                let mut v = vec![0.0; self.dim];
                v[(h % self.dim as u64) as usize] = 1.0;
                v
            }
            EmbedMode::Gaussian { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
                (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        };
        EmbeddingVector::new(&self.model_id, values)
    }
}

type EmbedFn = dyn Fn(&str) -> Result<Vec<f64>> + Send + Sync;

/// Embedder answering from a closure; counts calls.
pub struct ScriptedEmbedder {
    model_id: String,
    dim: usize,
    f: Box<EmbedFn>,
    calls: AtomicUsize,
}

impl ScriptedEmbedder {
    pub fn new(model_id: &str, dim: usize, f: impl Fn(&str) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        ScriptedEmbedder {
            model_id: model_id.to_string(),
            dim,
            f: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl EmbeddingProvider for ScriptedEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        check_embed_input(text)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        EmbeddingVector::new(&self.model_id, (self.f)(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_embedder_dim_and_determinism() {
        let e = HashEmbedder::basis("m", 7);
        let a = e.embed("Helen smiled.").unwrap();
        assert_eq!(a.dim, 7);
        assert_eq!(a.values.iter().filter(|v| **v == 1.0).count(), 1);
        assert_eq!(a, e.embed("Helen smiled.").unwrap());
        assert!(e.embed("  ").is_err());
    }

    #[test]
    fn gaussian_embedder_varies_by_text() {
        let e = HashEmbedder::gaussian("m", 8, 1);
        assert_ne!(e.embed("a").unwrap(), e.embed("b").unwrap());
        assert_eq!(e.embed("a").unwrap(), e.embed("a").unwrap());
    }
}
