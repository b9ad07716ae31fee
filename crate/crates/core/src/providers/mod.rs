//! Chat-completion and embedding clients with a record/replay cache.

mod cache;
mod http;
mod limit;
mod stub;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::{CacheEntry, CacheMode, CachedChat, CachedEmbedder, ReplayCache};
pub use http::{api_key_var, HttpChatProvider, HttpEmbeddingProvider, RetryPolicy};
pub use limit::{Limiter, Permit};
pub use stub::{EmbedMode, HashEmbedder, OfflineProvider, ScriptedChat, ScriptedEmbedder};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub provider_id: String,
    pub template_id: String,
    pub rendered_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::validation(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.rendered_prompt.trim().is_empty() {
            return Err(Error::validation("empty prompt"));
        }
        Ok(())
    }

    /// Content hash over the request's semantic fields.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::to_string(&(
            &self.provider_id,
            &self.template_id,
            &self.rendered_prompt,
            self.temperature,
            self.max_tokens,
        ))
        .expect("tuple of plain values serializes");
        sha256_hex(canonical.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn new(model_id: &str, values: Vec<f64>) -> Result<Self> {
        let v = EmbeddingVector {
            dim: values.len(),
            values,
            model_id: model_id.to_string(),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.values.len() != self.dim {
            return Err(Error::validation(format!(
                "embedding from `{}` has {} values for dim {}",
                self.model_id,
                self.values.len(),
                self.dim
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("embedding from `{}` is not finite", self.model_id)));
        }
        Ok(())
    }
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

pub(crate) fn check_embed_input(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::validation("cannot embed empty text"));
    }
    Ok(())
}

pub(crate) fn check_dim(v: &EmbeddingVector, dim: usize) -> Result<()> {
    v.validate()?;
    if v.dim != dim {
        return Err(Error::Provider {
            provider: v.model_id.clone(),
            message: format!("returned dim {}, configured {dim}", v.dim),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// OpenAI-style HTTP endpoint.
    #[default]
    Http,
    /// No transport; only cached responses are served.
    Offline,
}

fn default_concurrency() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    /// Embedding dimension; required for embedding providers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Offline,
            endpoint: String::new(),
            model: String::new(),
            dim: None,
            max_concurrency: default_concurrency(),
            retries: default_retries(),
        }
    }
}

/// Chat and embedding providers by id, all routed through one cache.
#[derive(Clone, Default)]
pub struct Providers {
    pub chat: BTreeMap<String, Arc<dyn ChatProvider>>,
    pub embed: BTreeMap<String, Arc<dyn EmbeddingProvider>>,
}

impl Providers {
    pub fn from_config(
        configs: &BTreeMap<String, ProviderConfig>,
        cache_dir: &Path,
        mode: CacheMode,
    ) -> Result<Self> {
        let cache = Arc::new(ReplayCache::open(cache_dir, mode)?);
        let mut out = Providers::default();
        for (id, cfg) in configs {
            let limiter = Limiter::new(cfg.max_concurrency)?;
            let retry = RetryPolicy {
                attempts: cfg.retries.max(1),
                ..RetryPolicy::default()
            };
            let chat: Arc<dyn ChatProvider> = match cfg.kind {
                ProviderKind::Http => Arc::new(HttpChatProvider::new(id, &cfg.endpoint, &cfg.model, retry.clone())),
                ProviderKind::Offline => Arc::new(OfflineProvider::new(id)),
            };
            out.chat.insert(
                id.clone(),
                Arc::new(CachedChat::new(chat, cache.clone(), limiter.clone())),
            );
            if let Some(dim) = cfg.dim {
                let model = if cfg.model.is_empty() { id.as_str() } else { cfg.model.as_str() };
                let embed: Arc<dyn EmbeddingProvider> = match cfg.kind {
                    ProviderKind::Http => Arc::new(HttpEmbeddingProvider::new(id, &cfg.endpoint, model, dim, retry)),
                    ProviderKind::Offline => Arc::new(OfflineProvider::with_dim(model, dim)),
                };
                out.embed
                    .insert(id.clone(), Arc::new(CachedEmbedder::new(embed, cache.clone(), limiter)));
            }
        }
        Ok(out)
    }

    pub fn chat(&self, id: &str) -> Result<Arc<dyn ChatProvider>> {
        self.chat
            .get(id)
            .cloned()
            .ok_or_else(|| Error::validation(format!("no chat provider `{id}` configured")))
    }

    pub fn embedder(&self, id: &str) -> Result<Arc<dyn EmbeddingProvider>> {
        self.embed
            .get(id)
            .cloned()
            .ok_or_else(|| Error::validation(format!("no embedding provider `{id}` configured")))
    }
}
