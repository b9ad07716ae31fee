//! Blocking HTTP clients for chat-completions style endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use super::{check_dim, check_embed_input, ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Environment variable holding the credential for `provider_id`.
pub fn api_key_var(provider_id: &str) -> String {
    let id: String = provider_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("{id}_API_KEY")
}

struct Transport {
    provider_id: String,
    endpoint: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl Transport {
    fn new(provider_id: &str, endpoint: &str, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(retry.timeout))
            .build()
            .into();
        Transport {
            provider_id: provider_id.to_string(),
            endpoint: endpoint.to_string(),
            retry,
            agent,
        }
    }

    fn post_once(&self, body: &Value) -> std::result::Result<Value, String> {
        let mut req = self.agent.post(&self.endpoint);
        if let Ok(key) = std::env::var(api_key_var(&self.provider_id)) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }

    /// POSTs `body`, retrying with exponential backoff.
    fn post(&self, body: &Value) -> Result<Value> {
        if self.endpoint.is_empty() {
            return Err(Error::Provider {
                provider: self.provider_id.clone(),
                message: "no endpoint configured".into(),
            });
        }
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.post_once(body) {
                Ok(v) => {
                    log::info!("{}: request succeeded on attempt {attempt}/{attempts}", self.provider_id);
                    return Ok(v);
                }
                Err(e) => {
                    log::warn!("{}: attempt {attempt}/{attempts} failed: {e}", self.provider_id);
                    last = e;
                    if attempt < attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(Error::Provider {
            provider: self.provider_id.clone(),
            message: format!("{attempts} attempts failed; last error: {last}"),
        })
    }
}

pub struct HttpChatProvider {
    transport: Transport,
    model: String,
}

impl HttpChatProvider {
    pub fn new(provider_id: &str, endpoint: &str, model: &str, retry: RetryPolicy) -> Self {
        HttpChatProvider {
            transport: Transport::new(provider_id, endpoint, retry),
            model: model.to_string(),
        }
    }
}

impl ChatProvider for HttpChatProvider {
    fn id(&self) -> &str {
        &self.transport.provider_id
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let resp = self.transport.post(&body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Provider {
                provider: self.id().to_string(),
                message: "response lacks choices[0].message.content".into(),
            })
    }
}

pub struct HttpEmbeddingProvider {
    transport: Transport,
    model: String,
    dim: usize,
}

impl HttpEmbeddingProvider {
    pub fn new(provider_id: &str, endpoint: &str, model: &str, dim: usize, retry: RetryPolicy) -> Self {
        HttpEmbeddingProvider {
            transport: Transport::new(provider_id, endpoint, retry),
            model: model.to_string(),
            dim,
        }
    }
}

/// Accepts a bare float array or `{"data": [{"embedding": [...]}]}`.
fn parse_embedding(v: &Value) -> Option<Vec<f64>> {
    let arr = match v {
        Value::Array(_) => v,
        _ => v.pointer("/data/0/embedding")?,
    };
    arr.as_array()?.iter().map(Value::as_f64).collect()
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        check_embed_input(text)?;
        let resp = self.transport.post(&json!({"model": self.model, "input": text}))?;
        let values = parse_embedding(&resp).ok_or_else(|| Error::Provider {
            provider: self.transport.provider_id.clone(),
            message: "response is not an embedding".into(),
        })?;
        let v = EmbeddingVector::new(&self.model, values)?;
        check_dim(&v, self.dim)?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_variable_name() {
        assert_eq!(api_key_var("deepseek-v3"), "DEEPSEEK_V3_API_KEY");
    }

    #[test]
    fn embedding_shapes() {
        assert_eq!(parse_embedding(&json!([0.5, 1])), Some(vec![0.5, 1.0]));
        assert_eq!(parse_embedding(&json!({"data": [{"embedding": [2.0]}]})), Some(vec![2.0]));
        assert_eq!(parse_embedding(&json!({"x": 1})), None);
    }

    #[test]
    fn missing_endpoint_is_provider_error() {
        let p = HttpChatProvider::new("p", "", "m", RetryPolicy::default());
        let req = ChatRequest {
            provider_id: "p".into(),
            template_id: "t".into(),
            rendered_prompt: "hi".into(),
            temperature: 1.0,
            max_tokens: 8,
        };
        assert!(matches!(p.complete(&req), Err(Error::Provider { .. })));
    }
}
