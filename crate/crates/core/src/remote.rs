//! Blocking JSON-over-HTTP client with retries and optional record/replay.

use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use ureq::Agent;

use crate::cache::ResponseCache;
use crate::error::{Error, Result};

#[derive(Clone)]
pub struct JsonClient {
    agent: Agent,
    url: String,
    api_key: Option<String>,
    max_retries: usize,
    backoff: Duration,
    cache: Option<Arc<ResponseCache>>,
}

impl JsonClient {
    pub fn new(url: impl Into<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
            api_key: None,
            max_retries: 3,
            backoff: Duration::from_millis(250),
            cache: None,
        }
    }

    pub fn api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn max_retries(mut self, n: usize) -> Self {
        self.max_retries = n;
        self
    }

    pub fn backoff(mut self, d: Duration) -> Self {
        self.backoff = d;
        self
    }

    pub fn cache(mut self, cache: Option<Arc<ResponseCache>>) -> Self {
        self.cache = cache;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body`, consulting the cache first and recording on success.
    pub fn post(&self, body: &Value) -> Result<Value> {
        let key = self
            .cache
            .as_ref()
            .map(|_| ResponseCache::key(&self.url, body));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                return Ok(hit);
            }
        }
        let value = self.post_with_retry(body)?;
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            cache.put(key, value.clone())?;
        }
        Ok(value)
    }

    fn post_with_retry(&self, body: &Value) -> Result<Value> {
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * (1 << (attempt - 1).min(6)) as u32);
            }
            let mut req = self.agent.post(&self.url);
            if let Some(k) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {k}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || status >= 500 {
                        last = format!("HTTP {status}");
                        log::warn!("{}: {last}, retrying", self.url);
                        continue;
                    }
                    if status >= 400 {
                        let text = resp.body_mut().read_to_string().unwrap_or_default();
                        return Err(Error::BadResponse(format!("HTTP {status}: {text}")));
                    }
                    return resp
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| Error::BadResponse(e.to_string()));
                }
                Err(e) => {
                    last = e.to_string();
                    log::warn!("{}: {last}, retrying", self.url);
                }
            }
        }
        Err(Error::BackendUnavailable {
            attempts,
            message: last,
        })
    }
}
