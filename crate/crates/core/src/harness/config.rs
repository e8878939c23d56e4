//! Run configuration, seeding and backend construction.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::aggregate::{AggregationConfig, Embedder, HashEmbedder, HttpEmbedder};
use crate::baselines::{CotSpan, SamplerConfig};
use crate::cache::ResponseCache;
use crate::error::{Error, Result};
use crate::explore::BranchConfig;
use crate::gcot::GcotConfig;
use crate::lm::{HttpBackend, HttpBackendConfig, LmBackend, ToyLm};
use crate::scoring::{ScoreMethod, SpanAlignMode, DEFAULT_MAX_ANSWER_TOKENS, DEFAULT_TEMPLATE};

/// Environment variable holding the API key for remote endpoints.
pub const API_KEY_ENV: &str = "GCOT_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Greedy,
    Temp,
    Topk,
    Beam,
    SelfConsistency,
    CotDecoding,
    Gcot,
    GcotSpanalign,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Greedy,
        Method::Temp,
        Method::Topk,
        Method::Beam,
        Method::SelfConsistency,
        Method::CotDecoding,
        Method::Gcot,
        Method::GcotSpanalign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Temp => "temp",
            Method::Topk => "topk",
            Method::Beam => "beam",
            Method::SelfConsistency => "self-consistency",
            Method::CotDecoding => "cot-decoding",
            Method::Gcot => "gcot",
            Method::GcotSpanalign => "gcot-spanalign",
        }
    }

    pub fn is_gcot(self) -> bool {
        matches!(self, Method::Gcot | Method::GcotSpanalign)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Answer-confidence signal for the `gcot` method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confidence {
    #[default]
    Gap,
    Entropy,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub branch: BranchConfig,
    pub aggregation: AggregationConfig,
    pub sampler: SamplerConfig,
    pub confidence: Confidence,
    pub spanalign_mode: SpanAlignMode,
    pub template: String,
    pub max_answer_tokens: usize,
    /// Score CoT-decoding on the templated answer instead of a rule span.
    pub cot_prompt_spans: bool,
    /// Text placed before every question (e.g. few-shot demonstrations).
    pub prompt_prefix: Option<String>,
    pub datasets: Vec<PathBuf>,
    /// `toy:<script>` or `http:<url>`.
    pub backend: String,
    pub model: Option<String>,
    pub alternates: usize,
    /// `hash` or `http:<url>`.
    pub embedder: String,
    pub embed_model: Option<String>,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Gcot],
            branch: BranchConfig::default(),
            aggregation: AggregationConfig::default(),
            sampler: SamplerConfig::default(),
            confidence: Confidence::Gap,
            spanalign_mode: SpanAlignMode::Last,
            template: DEFAULT_TEMPLATE.to_string(),
            max_answer_tokens: DEFAULT_MAX_ANSWER_TOKENS,
            cot_prompt_spans: false,
            prompt_prefix: None,
            datasets: Vec::new(),
            backend: String::new(),
            model: None,
            alternates: 20,
            embedder: "hash".to_string(),
            embed_model: None,
            runs: 3,
            seed: 0,
            out: PathBuf::from("out"),
            cache: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.aggregation.validate()?;
        self.sampler.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("no method selected".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.max_answer_tokens == 0 {
            return Err(Error::Config("max_answer_tokens must be at least 1".into()));
        }
        parse_backend_spec(&self.backend)?;
        parse_embedder_spec(&self.embedder)?;
        Ok(())
    }

    pub fn gcot_config(&self, method: Method) -> GcotConfig {
        let score = match (method, self.confidence, self.spanalign_mode) {
            (Method::GcotSpanalign, _, SpanAlignMode::Last) => ScoreMethod::SpanAlign,
            (Method::GcotSpanalign, _, SpanAlignMode::Mean) => ScoreMethod::SpanAlignMean,
            (_, Confidence::Gap, _) => ScoreMethod::Gcot,
            (_, Confidence::Entropy, _) => ScoreMethod::Entropy,
            (_, Confidence::Logit, _) => ScoreMethod::Logit,
        };
        GcotConfig {
            branch: self.branch.clone(),
            score,
            aggregation: self.aggregation.clone(),
            template: self.template.clone(),
            max_answer_tokens: self.max_answer_tokens,
        }
    }

    pub fn cot_span(&self) -> CotSpan {
        if self.cot_prompt_spans {
            CotSpan::Prompt {
                template: self.template.clone(),
                max_answer_tokens: self.max_answer_tokens,
            }
        } else {
            CotSpan::Rule
        }
    }

    /// Seed of run `index` (0-based).
    pub fn run_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &[b"run", &(index as u64).to_le_bytes()])
    }

    /// Hash of everything that determines a record's content: the method,
    /// every hyperparameter, backend, embedder and the run seed. Output and
    /// cache locations are excluded.
    pub fn config_hash(&self, method: Method, run_seed: u64) -> String {
        let v = json!({
            "method": method,
            "branch": self.branch,
            "aggregation": self.aggregation,
            "sampler": self.sampler,
            "confidence": self.confidence,
            "spanalign_mode": self.spanalign_mode,
            "template": self.template,
            "max_answer_tokens": self.max_answer_tokens,
            "cot_prompt_spans": self.cot_prompt_spans,
            "prompt_prefix": self.prompt_prefix,
            "backend": self.backend,
            "model": self.model,
            "alternates": self.alternates,
            "embedder": self.embedder,
            "embed_model": self.embed_model,
            "seed": run_seed,
        });
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Counter-based seed expansion: SHA-256 over the parent seed and labels.
pub fn derive_seed(parent: u64, labels: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Toy(PathBuf),
    Http(String),
}

pub fn parse_backend_spec(spec: &str) -> Result<BackendSpec> {
    if let Some(p) = spec.strip_prefix("toy:") {
        Ok(BackendSpec::Toy(PathBuf::from(p)))
    } else if let Some(u) = spec.strip_prefix("http:") {
        // accept both http:<url> and a bare http://... url
        if u.starts_with("//") {
            Ok(BackendSpec::Http(spec.to_string()))
        } else {
            Ok(BackendSpec::Http(u.to_string()))
        }
    } else if spec.starts_with("https:") {
        Ok(BackendSpec::Http(spec.to_string()))
    } else {
        Err(Error::Config(format!(
            "backend {spec:?} is neither toy:<script> nor http:<url>"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Hash,
    Http(String),
}

pub fn parse_embedder_spec(spec: &str) -> Result<EmbedderSpec> {
    match parse_backend_spec(spec) {
        _ if spec == "hash" => Ok(EmbedderSpec::Hash),
        Ok(BackendSpec::Http(u)) => Ok(EmbedderSpec::Http(u)),
        _ => Err(Error::Config(format!(
            "embedder {spec:?} is neither hash nor http:<url>"
        ))),
    }
}

fn api_key() -> Option<String> {
    std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
}

pub fn open_cache(cfg: &RunConfig) -> Result<Option<Arc<ResponseCache>>> {
    cfg.cache
        .as_ref()
        .map(|p| ResponseCache::open(p).map(Arc::new))
        .transpose()
}

pub fn build_backend(
    cfg: &RunConfig,
    cache: Option<Arc<ResponseCache>>,
) -> Result<Box<dyn LmBackend>> {
    match parse_backend_spec(&cfg.backend)? {
        BackendSpec::Toy(p) => Ok(Box::new(ToyLm::load(p)?)),
        BackendSpec::Http(url) => {
            let mut hc = HttpBackendConfig::new(url);
            hc.api_key = api_key();
            hc.model = cfg.model.clone();
            hc.alternates = cfg.alternates;
            Ok(Box::new(HttpBackend::new(hc, cache)?))
        }
    }
}

pub fn build_embedder(
    cfg: &RunConfig,
    cache: Option<Arc<ResponseCache>>,
) -> Result<Box<dyn Embedder>> {
    match parse_embedder_spec(&cfg.embedder)? {
        EmbedderSpec::Hash => Ok(Box::new(HashEmbedder::default())),
        EmbedderSpec::Http(url) => Ok(Box::new(HttpEmbedder::new(
            url,
            api_key(),
            cfg.embed_model.clone(),
            cache,
        ))),
    }
}
