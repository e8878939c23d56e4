//! Deterministic scripted language model.
//!
//! A script is a UTF-8 text file with one record per line:
//!
//! ```text
//! context_key<TAB>token:prob,token:prob,...
//! ```
//!
//! The context key is the whitespace-joined text of every context token.
//! A candidate may carry a raw score as `token:prob@score`. The literal
//! `<eos>` denotes end-of-sequence and `\n` a newline token. Blank lines and
//! lines starting with `#` are ignored. Contexts absent from the script are
//! errors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::{Candidate, LmBackend, StepDistribution, Token, EOS_ID, EOS_TEXT, MASS_TOLERANCE};
use crate::error::{Error, Result};

const DEFAULT_CONTEXT_LIMIT: usize = 8192;

#[derive(Debug, Clone)]
struct Entry {
    id: u32,
    prob: f64,
    score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyLm {
    table: HashMap<String, Vec<Entry>>,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    max_rank: usize,
    context_limit: usize,
}

fn unescape(s: &str) -> String {
    s.replace("\\n", "\n")
}

fn escape(s: &str) -> String {
    s.replace('\n', "\\n")
}

fn candidate_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(.+?):([0-9][0-9.eE+-]*)(?:@([0-9.eE+-]+))?(?:,|$)").unwrap())
}

/// Splits `token:prob[@score],...` into its entries.
fn parse_candidates(list: &str, line: usize) -> Result<Vec<(String, f64, Option<f64>)>> {
    let err = |message: String| Error::ScriptParse { line, message };
    let mut rest = list.trim_end();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let caps = candidate_re()
            .captures(rest)
            .ok_or_else(|| err(format!("cannot parse candidate list at {rest:?}")))?;
        let text = caps[1].to_string();
        let prob: f64 = caps[2]
            .parse()
            .map_err(|_| err(format!("bad probability {:?}", &caps[2])))?;
        let score = match caps.get(3) {
            Some(m) => Some(
                m.as_str()
                    .parse::<f64>()
                    .map_err(|_| err(format!("bad score {:?}", m.as_str())))?,
            ),
            None => None,
        };
        out.push((text, prob, score));
        rest = &rest[caps[0].len()..];
    }
    if out.is_empty() {
        return Err(err("empty candidate list".into()));
    }
    Ok(out)
}

impl ToyLm {
    pub fn from_script(script: &str) -> Result<Self> {
        let mut lm = ToyLm {
            table: HashMap::new(),
            vocab: vec![EOS_TEXT.to_string()],
            ids: HashMap::from([(EOS_TEXT.to_string(), EOS_ID)]),
            max_rank: 2,
            context_limit: DEFAULT_CONTEXT_LIMIT,
        };
        for (i, raw) in script.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, list) = raw.split_once('\t').ok_or(Error::ScriptParse {
                line,
                message: "missing TAB between context and candidates".into(),
            })?;
            let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
            for word in key.split(' ').filter(|w| !w.is_empty()) {
                lm.intern(&unescape(word));
            }
            let mut entries = Vec::new();
            let mut mass = 0.0;
            for (text, prob, score) in parse_candidates(list, line)? {
                if !(0.0..=1.0).contains(&prob) {
                    return Err(Error::ScriptParse {
                        line,
                        message: format!("probability {prob} outside [0, 1]"),
                    });
                }
                let id = lm.intern(&unescape(&text));
                if entries.iter().any(|e: &Entry| e.id == id) {
                    return Err(Error::ScriptParse {
                        line,
                        message: format!("duplicate candidate {text:?}"),
                    });
                }
                mass += prob;
                entries.push(Entry { id, prob, score });
            }
            if mass > 1.0 + MASS_TOLERANCE {
                return Err(Error::ScriptParse {
                    line,
                    message: format!("candidate probabilities sum to {mass}"),
                });
            }
            // stable: equal probabilities keep script order
            entries.sort_by(|a, b| b.prob.total_cmp(&a.prob));
            lm.max_rank = lm.max_rank.max(entries.len());
            if lm.table.insert(key.clone(), entries).is_some() {
                return Err(Error::ScriptParse {
                    line,
                    message: format!("duplicate context {key:?}"),
                });
            }
        }
        Ok(lm)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_script(&std::fs::read_to_string(path)?)
    }

    pub fn with_context_limit(mut self, limit: usize) -> Self {
        self.context_limit = limit;
        self
    }

    fn intern(&mut self, text: &str) -> u32 {
        if let Some(&id) = self.ids.get(text) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.vocab.push(text.to_string());
        self.ids.insert(text.to_string(), id);
        id
    }

    pub fn token(&self, text: &str) -> Result<Token> {
        self.ids
            .get(text)
            .map(|&id| Token::new(id, text))
            .ok_or_else(|| Error::UnknownToken(text.to_string()))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn context_key(tokens: &[Token]) -> String {
        tokens
            .iter()
            .map(|t| escape(&t.text))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl LmBackend for ToyLm {
    fn next_distribution(&self, context: &[Token]) -> Result<StepDistribution> {
        if context.len() > self.context_limit {
            return Err(Error::ContextTooLong {
                len: context.len(),
                limit: self.context_limit,
            });
        }
        let key = Self::context_key(context);
        let entries = self.table.get(&key).ok_or(Error::ScriptMiss(key))?;
        let candidates = entries
            .iter()
            .map(|e| {
                let c = Candidate::new(Token::new(e.id, self.vocab[e.id as usize].clone()), e.prob);
                match e.score {
                    Some(s) => c.with_score(s),
                    None => c,
                }
            })
            .collect();
        StepDistribution::new(candidates, context.len())
    }

    fn max_visible_rank(&self) -> usize {
        self.max_rank
    }

    fn encode(&self, text: &str) -> Result<Vec<Token>> {
        text.split_whitespace()
            .map(|w| self.token(&unescape(w)))
            .collect()
    }

    fn render(&self, tokens: &[Token]) -> String {
        tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Programmatic construction of toy scripts.
#[derive(Debug, Clone, Default)]
pub struct ScriptBuilder {
    entries: Vec<(String, Vec<(String, f64)>)>,
    index: HashMap<String, usize>,
}

impl ScriptBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the candidate list for `context` (whitespace-joined token texts),
    /// replacing any earlier entry for the same context.
    pub fn entry(&mut self, context: &str, candidates: &[(&str, f64)]) -> &mut Self {
        let key = context.split_whitespace().collect::<Vec<_>>().join(" ");
        let list = candidates
            .iter()
            .map(|(t, p)| (t.to_string(), *p))
            .collect();
        match self.index.get(&key) {
            Some(&i) => self.entries[i].1 = list,
            None => {
                self.index.insert(key.clone(), self.entries.len());
                self.entries.push((key, list));
            }
        }
        self
    }

    pub fn contains(&self, context: &str) -> bool {
        let key = context.split_whitespace().collect::<Vec<_>>().join(" ");
        self.index.contains_key(&key)
    }

    pub fn to_script(&self) -> String {
        let mut out = String::new();
        for (key, list) in &self.entries {
            let items: Vec<String> = list.iter().map(|(t, p)| format!("{t}:{p}")).collect();
            let _ = writeln!(out, "{key}\t{}", items.join(","));
        }
        out
    }

    pub fn build(&self) -> Result<ToyLm> {
        ToyLm::from_script(&self.to_script())
    }
}
