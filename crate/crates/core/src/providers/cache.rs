//! Content-addressed response cache: one `<key>.json` file per request.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::limit::Limiter;
use super::{check_dim, check_embed_input, ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector};
use crate::corpus::write_atomic;
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Every request goes to the provider; nothing is stored.
    Off,
    /// Hits are served from the cache; misses go to the provider and are stored.
    #[default]
    Record,
    /// Hits only; a miss is an error and no provider is contacted.
    Replay,
}

impl std::str::FromStr for CacheMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(CacheMode::Off),
            "record" => Ok(CacheMode::Record),
            "replay" => Ok(CacheMode::Replay),
            other => Err(Error::validation(format!("unknown cache mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: Value,
    /// Seconds since the Unix epoch when the entry was recorded.
    pub timestamp: u64,
}

#[derive(Debug)]
pub struct ReplayCache {
    dir: PathBuf,
    mode: CacheMode,
    writes: Mutex<()>,
}

impl ReplayCache {
    pub fn open(dir: &Path, mode: CacheMode) -> Result<Self> {
        match mode {
            CacheMode::Record => std::fs::create_dir_all(dir)
                .map_err(|e| Error::io(format!("create {}", dir.display()), e))?,
            CacheMode::Replay if !dir.is_dir() => {
                return Err(Error::Dependency(format!(
                    "replay cache {} does not exist",
                    dir.display()
                )))
            }
            _ => {}
        }
        Ok(ReplayCache {
            dir: dir.to_path_buf(),
            mode,
            writes: Mutex::new(()),
        })
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>> {
        if self.mode == CacheMode::Off {
            return Ok(None);
        }
        let path = self.path(key);
        match std::fs::read(&path) {
            Ok(bytes) => {
                let entry: CacheEntry = serde_json::from_slice(&bytes)?;
                if entry.key != key {
                    return Err(Error::invariant("key", format!("{} holds key {}", path.display(), entry.key)));
                }
                Ok(Some(entry))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(format!("read {}", path.display()), e)),
        }
    }

    pub fn put(&self, key: &str, response: Value) -> Result<()> {
        if self.mode != CacheMode::Record {
            return Ok(());
        }
        let entry = CacheEntry {
            key: key.to_string(),
            response,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let mut bytes = serde_json::to_vec_pretty(&entry)?;
        bytes.push(b'\n');
        let _guard = self.writes.lock().unwrap_or_else(|e| e.into_inner());
        write_atomic(&self.path(key), &bytes)
    }

    /// Cached value for `key`, or `fetch()` recorded under it.
    fn through(&self, provider: &str, key: &str, fetch: impl FnOnce() -> Result<Value>) -> Result<Value> {
        if let Some(hit) = self.get(key)? {
            log::trace!("cache hit {key} ({provider})");
            return Ok(hit.response);
        }
        if self.mode == CacheMode::Replay {
            return Err(Error::CacheMiss {
                provider: provider.to_string(),
                key: key.to_string(),
            });
        }
        let value = fetch()?;
        self.put(key, value.clone())?;
        Ok(value)
    }
}

/// Chat provider behind the cache and a concurrency bound.
pub struct CachedChat {
    inner: Arc<dyn ChatProvider>,
    cache: Arc<ReplayCache>,
    limiter: Limiter,
}

impl CachedChat {
    pub fn new(inner: Arc<dyn ChatProvider>, cache: Arc<ReplayCache>, limiter: Limiter) -> Self {
        CachedChat { inner, cache, limiter }
    }
}

impl ChatProvider for CachedChat {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        let value = self.cache.through(self.inner.id(), &request.cache_key(), || {
            let _permit = self.limiter.acquire();
            self.inner.complete(request).map(Value::String)
        })?;
        match value {
            Value::String(s) => Ok(s),
            other => Err(Error::invariant("response", format!("expected text, cached {other}"))),
        }
    }
}

pub struct CachedEmbedder {
    inner: Arc<dyn EmbeddingProvider>,
    cache: Arc<ReplayCache>,
    limiter: Limiter,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn EmbeddingProvider>, cache: Arc<ReplayCache>, limiter: Limiter) -> Self {
        CachedEmbedder { inner, cache, limiter }
    }

    pub fn cache_key(model_id: &str, text: &str) -> String {
        let canonical = serde_json::to_string(&(model_id, "embed", text)).expect("strings serialize");
        sha256_hex(canonical.as_bytes())
    }
}

impl EmbeddingProvider for CachedEmbedder {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        check_embed_input(text)?;
        let key = Self::cache_key(self.inner.model_id(), text);
        let value = self.cache.through(self.inner.model_id(), &key, || {
            let _permit = self.limiter.acquire();
            Ok(serde_json::to_value(self.inner.embed(text)?.values)?)
        })?;
        let values: Vec<f64> = serde_json::from_value(value)?;
        let v = EmbeddingVector::new(self.inner.model_id(), values)?;
        check_dim(&v, self.dim())?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{HashEmbedder, OfflineProvider, ScriptedChat};

    fn req(prompt: &str) -> ChatRequest {
        ChatRequest {
            provider_id: "gen".into(),
            template_id: "t".into(),
            rendered_prompt: prompt.into(),
            temperature: 1.0,
            max_tokens: 64,
        }
    }

    #[test]
    fn record_then_replay_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let scripted = Arc::new(ScriptedChat::new("gen", |r| Ok(format!("echo {}", r.rendered_prompt))));
        let rec = CachedChat::new(
            scripted.clone(),
            Arc::new(ReplayCache::open(dir.path(), CacheMode::Record).unwrap()),
            Limiter::new(1).unwrap(),
        );
        assert_eq!(rec.complete(&req("a")).unwrap(), "echo a");
        assert_eq!(rec.complete(&req("a")).unwrap(), "echo a");
        assert_eq!(scripted.calls(), 1);

        let replay = CachedChat::new(
            Arc::new(OfflineProvider::new("gen")),
            Arc::new(ReplayCache::open(dir.path(), CacheMode::Replay).unwrap()),
            Limiter::new(1).unwrap(),
        );
        assert_eq!(replay.complete(&req("a")).unwrap(), "echo a");
        assert!(matches!(replay.complete(&req("b")), Err(Error::CacheMiss { .. })));
    }

    #[test]
    fn replay_needs_existing_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ReplayCache::open(&dir.path().join("nope"), CacheMode::Replay),
            Err(Error::Dependency(_))
        ));
    }

    #[test]
    fn embeddings_replay_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ReplayCache::open(dir.path(), CacheMode::Record).unwrap());
        let e = CachedEmbedder::new(
            Arc::new(HashEmbedder::gaussian("m", 16, 3)),
            cache,
            Limiter::new(2).unwrap(),
        );
        let a = e.embed("hello there").unwrap();
        let replay = CachedEmbedder::new(
            Arc::new(OfflineProvider::with_dim("m", 16)),
            Arc::new(ReplayCache::open(dir.path(), CacheMode::Replay).unwrap()),
            Limiter::new(2).unwrap(),
        );
        let b = replay.embed("hello there").unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(replay.embed("").is_err());
    }
}
