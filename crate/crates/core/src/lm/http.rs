//! Remote backend for completion-style inference servers.
//!
//! Requests follow the OpenAI legacy completions shape (`prompt`,
//! `max_tokens`, `logprobs: n`, `temperature: 0`). Responses may use either
//! the completions layout (`logprobs.tokens` / `logprobs.top_logprobs`) or
//! the chat layout (`logprobs.content[].top_logprobs`). Log-probabilities are
//! exponentiated to probabilities; the log-probabilities themselves are kept
//! as raw scores, since their top-2 difference equals the logit difference.

use std::sync::Arc;

use serde_json::{json, Value};

use super::{Candidate, GreedyTrace, LmBackend, StepDistribution, StopReason, Token, EOS_ID};
use crate::cache::ResponseCache;
use crate::error::{Error, Result};
use crate::remote::JsonClient;

/// Id given to prompt text passed through [`LmBackend::encode`].
pub const PROMPT_ID: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    /// Number of ranked alternates requested per position.
    pub alternates: usize,
    pub max_retries: usize,
    /// Token texts the server uses for end-of-sequence.
    pub eos_texts: Vec<String>,
}

impl HttpBackendConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: None,
            alternates: 20,
            max_retries: 3,
            eos_texts: ["<|endoftext|>", "</s>", "<|eot_id|>", "<|im_end|>", "<eos>"]
                .map(String::from)
                .to_vec(),
        }
    }
}

pub struct HttpBackend {
    cfg: HttpBackendConfig,
    client: JsonClient,
}

#[derive(Debug)]
struct Position {
    chosen: String,
    chosen_logprob: Option<f64>,
    alternates: Vec<(String, f64)>,
}

fn fnv1a(s: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in s.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig, cache: Option<Arc<ResponseCache>>) -> Result<Self> {
        if cfg.alternates < 2 {
            return Err(Error::Config(
                "remote backend needs at least 2 alternates".into(),
            ));
        }
        let client = JsonClient::new(cfg.url.clone())
            .api_key(cfg.api_key.clone())
            .max_retries(cfg.max_retries)
            .cache(cache);
        Ok(Self { cfg, client })
    }

    /// Replaces the HTTP client (used to shorten retry backoff in tests).
    pub fn with_client(mut self, client: JsonClient) -> Self {
        self.client = client;
        self
    }

    fn make_token(&self, text: &str) -> Token {
        if self.cfg.eos_texts.iter().any(|e| e == text) {
            return Token::eos();
        }
        // ids 0 and u32::MAX are reserved
        let id = fnv1a(text) % (u32::MAX - 1) + 1;
        Token::new(id, text)
    }

    fn prompt(&self, context: &[Token]) -> String {
        let mut out = String::new();
        for t in context {
            if t.id == PROMPT_ID && !out.is_empty() && !out.ends_with(char::is_whitespace) {
                out.push(' ');
            }
            out.push_str(&t.text);
        }
        out
    }

    fn request(&self, context: &[Token], max_tokens: usize) -> Result<(Vec<Position>, String)> {
        let mut body = json!({
            "prompt": self.prompt(context),
            "max_tokens": max_tokens,
            "temperature": 0.0,
            "logprobs": self.cfg.alternates,
        });
        if let Some(m) = &self.cfg.model {
            body["model"] = json!(m);
        }
        let resp = self.client.post(&body)?;
        parse_response(&resp)
    }

    fn distribution(&self, pos: &Position, context_length: usize) -> Result<StepDistribution> {
        let mut alts = pos.alternates.clone();
        if !alts.iter().any(|(t, _)| *t == pos.chosen) {
            if let Some(lp) = pos.chosen_logprob {
                alts.push((pos.chosen.clone(), lp));
            }
        }
        alts.sort_by(|a, b| b.1.total_cmp(&a.1));
        alts.truncate(self.cfg.alternates);
        if alts.is_empty() {
            return Err(Error::BadResponse("position without candidates".into()));
        }
        let mut probs: Vec<f64> = alts
            .iter()
            .map(|(_, lp)| lp.exp().clamp(0.0, 1.0))
            .collect();
        let mass: f64 = probs.iter().sum();
        // server-side rounding can push the visible mass slightly above 1
        if mass > 1.0 && mass < 1.01 {
            probs.iter_mut().for_each(|p| *p /= mass);
        }
        let candidates = alts
            .iter()
            .zip(probs)
            .map(|((t, lp), p)| Candidate::new(self.make_token(t), p).with_score(*lp))
            .collect();
        StepDistribution::new(candidates, context_length)
    }
}

fn parse_response(resp: &Value) -> Result<(Vec<Position>, String)> {
    let bad = |m: &str| Error::BadResponse(m.to_string());
    let choice = resp
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| bad("missing choices[0]"))?;
    let finish = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .unwrap_or("length")
        .to_string();
    let lp = match choice.get("logprobs") {
        Some(Value::Null) | None => return Ok((Vec::new(), finish)),
        Some(v) => v,
    };
    let mut out = Vec::new();
    if let Some(content) = lp.get("content").and_then(Value::as_array) {
        for item in content {
            let chosen = item
                .get("token")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("content item without token"))?;
            let alternates = item
                .get("top_logprobs")
                .and_then(Value::as_array)
                .map(|arr| {
                    arr.iter()
                        .filter_map(|a| {
                            Some((
                                a.get("token")?.as_str()?.to_string(),
                                a.get("logprob")?.as_f64()?,
                            ))
                        })
                        .collect()
                })
                .unwrap_or_default();
            out.push(Position {
                chosen: chosen.to_string(),
                chosen_logprob: item.get("logprob").and_then(Value::as_f64),
                alternates,
            });
        }
        return Ok((out, finish));
    }
    let tokens = lp
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("logprobs without tokens"))?;
    let token_lps = lp.get("token_logprobs").and_then(Value::as_array);
    let tops = lp.get("top_logprobs").and_then(Value::as_array);
    for (i, t) in tokens.iter().enumerate() {
        let chosen = t.as_str().ok_or_else(|| bad("non-string token"))?;
        let alternates = tops
            .and_then(|a| a.get(i))
            .and_then(Value::as_object)
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| Some((k.clone(), v.as_f64()?)))
                    .collect()
            })
            .unwrap_or_default();
        out.push(Position {
            chosen: chosen.to_string(),
            chosen_logprob: token_lps.and_then(|a| a.get(i)).and_then(Value::as_f64),
            alternates,
        });
    }
    Ok((out, finish))
}

impl LmBackend for HttpBackend {
    fn next_distribution(&self, context: &[Token]) -> Result<StepDistribution> {
        let (positions, finish) = self.request(context, 1)?;
        match positions.first() {
            Some(pos) => self.distribution(pos, context.len()),
            None if finish == "stop" => {
                StepDistribution::new(vec![Candidate::new(Token::eos(), 1.0)], context.len())
            }
            None => Err(Error::BadResponse("no generated position".into())),
        }
    }

    fn max_visible_rank(&self) -> usize {
        self.cfg.alternates
    }

    fn encode(&self, text: &str) -> Result<Vec<Token>> {
        Ok(vec![Token::new(PROMPT_ID, text)])
    }

    fn greedy_steps(
        &self,
        context: &[Token],
        max_tokens: usize,
        stop: &dyn Fn(&Token) -> bool,
    ) -> Result<GreedyTrace> {
        let (positions, finish) = self.request(context, max_tokens)?;
        let mut steps = Vec::new();
        for pos in positions.iter().take(max_tokens) {
            let dist = self.distribution(pos, context.len() + steps.len())?;
            let top = &dist.top().token;
            if top.id == EOS_ID {
                return Ok(GreedyTrace {
                    steps,
                    stop: StopReason::Eos,
                });
            }
            if stop(top) {
                return Ok(GreedyTrace {
                    steps,
                    stop: StopReason::StopToken,
                });
            }
            steps.push(dist);
        }
        let stop = if steps.len() < max_tokens && finish == "stop" {
            StopReason::Eos
        } else {
            StopReason::MaxTokens
        };
        Ok(GreedyTrace { steps, stop })
    }
}
