//! Reference decoders: greedy, temperature and top-k sampling, beam search,
//! self-consistency and first-step-branching CoT-decoding.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::majority_vote;
use crate::error::{Error, Result};
use crate::explore::{seed_paths, Backtracking, BranchConfig, Seeding};
use crate::extract::TaskKind;
use crate::lm::{greedy_rollout, DecodedPath, LmBackend, StepDistribution, Token};
use crate::scoring::{cot_span_confidence, locate_span, split_answer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub top_k: usize,
    /// Optional nucleus cut applied after temperature scaling.
    pub top_p: Option<f64>,
    pub beam_width: usize,
    /// Samples drawn by self-consistency.
    pub sc_samples: usize,
    pub rng_seed: u64,
    pub max_tokens: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_k: 10,
            top_p: None,
            beam_width: 10,
            sc_samples: 10,
            rng_seed: 0,
            max_tokens: 256,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.top_k == 0 || self.beam_width == 0 || self.sc_samples == 0 {
            return Err(Error::Config(
                "top_k, beam_width and sc_samples must be at least 1".into(),
            ));
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("top_p {p} not in (0, 1]")));
            }
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }

    /// Generator for sample `index`; every index has its own stream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(index);
        rng
    }
}

/// Per-step sampling rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSampler {
    Temperature { t: f64, top_p: Option<f64> },
    TopK(usize),
}

impl StepSampler {
    /// Unnormalized weights over the visible candidates.
    pub fn weights(&self, dist: &StepDistribution) -> Vec<f64> {
        let probs: Vec<f64> = dist.candidates().iter().map(|c| c.prob).collect();
        match *self {
            StepSampler::TopK(k) => probs
                .iter()
                .enumerate()
                .map(|(i, &p)| if i < k { p } else { 0.0 })
                .collect(),
            StepSampler::Temperature { t, top_p } => {
                let top = probs[0];
                if top <= 0.0 {
                    return probs;
                }
                // p^(1/t) relative to the top candidate, in log space
                let mut w: Vec<f64> = probs
                    .iter()
                    .map(|&p| {
                        if p > 0.0 {
                            ((p.ln() - top.ln()) / t).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if let Some(cut) = top_p {
                    let total: f64 = w.iter().sum();
                    let mut cum = 0.0;
                    for x in w.iter_mut() {
                        if cum >= cut * total {
                            *x = 0.0;
                        } else {
                            cum += *x;
                        }
                    }
                }
                w
            }
        }
    }

    /// 1-indexed rank drawn from the renormalized weights.
    pub fn draw<R: Rng>(&self, dist: &StepDistribution, rng: &mut R) -> usize {
        let w = self.weights(dist);
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return 1;
        }
        let u = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut last_positive = 1;
        for (i, &x) in w.iter().enumerate() {
            if x > 0.0 {
                last_positive = i + 1;
                cum += x;
                if u < cum {
                    return i + 1;
                }
            }
        }
        last_positive
    }
}

/// Rank-1 token at every step until EOS or `max_tokens`.
pub fn greedy_decode(
    question: &[Token],
    backend: &dyn LmBackend,
    max_tokens: usize,
) -> Result<DecodedPath> {
    greedy_rollout(backend, question, max_tokens)
}

/// Samples one path, drawing each token with `sampler`.
pub fn sample_path<R: Rng>(
    question: &[Token],
    backend: &dyn LmBackend,
    max_tokens: usize,
    sampler: StepSampler,
    rng: &mut R,
) -> Result<DecodedPath> {
    let mut ctx = question.to_vec();
    let mut path = DecodedPath::default();
    while path.len() < max_tokens {
        let dist = backend.next_distribution(&ctx)?;
        let rank = sampler.draw(&dist, rng);
        if dist.candidate(rank)?.token.is_eos() {
            path.finished = true;
            return Ok(path);
        }
        path.push_ranked(&dist, rank)?;
        ctx.push(path.tokens.last().unwrap().clone());
    }
    Ok(path)
}

pub fn temperature_sample(
    question: &[Token],
    cfg: &SamplerConfig,
    backend: &dyn LmBackend,
) -> Result<DecodedPath> {
    cfg.validate()?;
    let sampler = StepSampler::Temperature {
        t: cfg.temperature,
        top_p: cfg.top_p,
    };
    sample_path(question, backend, cfg.max_tokens, sampler, &mut cfg.rng(0))
}

pub fn topk_sample(
    question: &[Token],
    cfg: &SamplerConfig,
    backend: &dyn LmBackend,
) -> Result<DecodedPath> {
    cfg.validate()?;
    let sampler = StepSampler::TopK(cfg.top_k);
    sample_path(question, backend, cfg.max_tokens, sampler, &mut cfg.rng(0))
}

#[derive(Debug, Clone)]
struct Hypothesis {
    path: DecodedPath,
    logp: f64,
    steps: usize,
}

impl Hypothesis {
    fn score(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.logp / self.steps as f64
        }
    }
}

/// Beam search ranked by log-probability divided by the number of steps
/// (the EOS step included). Returns the best hypothesis.
pub fn beam_search(
    question: &[Token],
    cfg: &SamplerConfig,
    backend: &dyn LmBackend,
) -> Result<DecodedPath> {
    cfg.validate()?;
    let mut beams = vec![Hypothesis {
        path: DecodedPath::default(),
        logp: 0.0,
        steps: 0,
    }];
    for _ in 0..cfg.max_tokens {
        if beams.iter().all(|h| h.path.finished) {
            break;
        }
        let dists: Vec<Option<StepDistribution>> = beams
            .par_iter()
            .map(|h| {
                if h.path.finished {
                    return Ok(None);
                }
                let mut ctx = question.to_vec();
                ctx.extend(h.path.tokens.iter().cloned());
                backend.next_distribution(&ctx).map(Some)
            })
            .collect::<Result<_>>()?;
        let mut pool = Vec::new();
        for (h, dist) in beams.iter().zip(dists) {
            let Some(dist) = dist else {
                pool.push(h.clone());
                continue;
            };
            for (i, c) in dist.candidates().iter().enumerate() {
                let mut next = Hypothesis {
                    path: h.path.clone(),
                    logp: h.logp + c.prob.ln(),
                    steps: h.steps + 1,
                };
                if c.token.is_eos() {
                    next.path.finished = true;
                } else {
                    next.path.push_ranked(&dist, i + 1)?;
                }
                pool.push(next);
            }
        }
        pool.sort_by(|a, b| b.score().total_cmp(&a.score()));
        pool.truncate(cfg.beam_width);
        beams = pool;
    }
    Ok(beams.swap_remove(0).path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub samples: Vec<DecodedPath>,
    pub answers: Vec<Option<String>>,
    /// Index of the sample whose answer won the vote.
    pub selected: usize,
    pub answer: Option<String>,
}

/// `sc_samples` temperature samples, majority vote over extracted answers.
///
/// Samples without an extractable answer do not vote.
pub fn self_consistency(
    question: &[Token],
    cfg: &SamplerConfig,
    task: TaskKind,
    backend: &dyn LmBackend,
) -> Result<VoteOutcome> {
    cfg.validate()?;
    let sampler = StepSampler::Temperature {
        t: cfg.temperature,
        top_p: cfg.top_p,
    };
    let samples: Vec<DecodedPath> = (0..cfg.sc_samples)
        .into_par_iter()
        .map(|i| {
            sample_path(
                question,
                backend,
                cfg.max_tokens,
                sampler,
                &mut cfg.rng(i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let answers: Vec<Option<String>> = samples
        .iter()
        .map(|p| task.extract(&backend.render(&p.tokens)).map(|e| e.value))
        .collect();
    let voters: Vec<(usize, &str)> = answers
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.as_deref().map(|a| (i, a)))
        .collect();
    let texts: Vec<&str> = voters.iter().map(|(_, a)| *a).collect();
    let selected = majority_vote(&texts).map(|v| voters[v].0).unwrap_or(0);
    Ok(VoteOutcome {
        answer: answers[selected].clone(),
        samples,
        answers,
        selected,
    })
}

/// Where CoT-decoding reads the answer span from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CotSpan {
    /// The task's rule-based extractor applied to the path text.
    Rule,
    /// The greedy continuation after an extraction template.
    Prompt {
        template: String,
        max_answer_tokens: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotPath {
    pub path: DecodedPath,
    pub answer: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotOutcome {
    pub paths: Vec<CotPath>,
    /// Most confident path among those carrying the winning answer.
    pub selected: usize,
    pub answer: Option<String>,
}

/// Branches the first step over ranks `1..=k`, completes each greedily,
/// scores the answer span by its mean top-2 gap and returns the answer with
/// the largest summed confidence.
pub fn cot_decoding(
    question: &[Token],
    k: usize,
    max_tokens: usize,
    span: &CotSpan,
    task: TaskKind,
    backend: &dyn LmBackend,
) -> Result<CotOutcome> {
    let branch = BranchConfig {
        k,
        seeding: Seeding::Sequential,
        backtracking: Backtracking::None,
        max_path_tokens: max_tokens,
        ..BranchConfig::default()
    };
    branch.validate()?;
    let seeds = seed_paths(question, &branch, backend)?;
    let paths: Vec<CotPath> = seeds
        .into_par_iter()
        .map(|path| score_cot_path(question, path, span, task, backend))
        .collect::<Result<_>>()?;

    let mut groups: Vec<(&str, f64)> = Vec::new();
    for p in &paths {
        let Some(a) = p.answer.as_deref() else {
            continue;
        };
        match groups.iter_mut().find(|(g, _)| *g == a) {
            Some(g) => g.1 += p.confidence,
            None => groups.push((a, p.confidence)),
        }
    }
    let mut best: Option<(&str, f64)> = None;
    for &(a, c) in &groups {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((a, c));
        }
    }
    let answer = best.map(|(a, _)| a.to_string());
    let mut selected = 0;
    if let Some(a) = &answer {
        let mut top = f64::NEG_INFINITY;
        for (i, p) in paths.iter().enumerate() {
            if p.answer.as_ref() == Some(a) && p.confidence > top {
                top = p.confidence;
                selected = i;
            }
        }
    }
    Ok(CotOutcome {
        paths,
        selected,
        answer,
    })
}

fn score_cot_path(
    question: &[Token],
    path: DecodedPath,
    span: &CotSpan,
    task: TaskKind,
    backend: &dyn LmBackend,
) -> Result<CotPath> {
    match span {
        CotSpan::Rule => {
            let text = backend.render(&path.tokens);
            let found = task.extract(&text).and_then(|e| {
                let toks = locate_span(backend, &path.tokens, e.range)?;
                Some((e.value, toks))
            });
            match found {
                Some((value, toks)) => Ok(CotPath {
                    confidence: cot_span_confidence(&path, toks)?.value,
                    answer: Some(value),
                    path,
                }),
                None => Ok(CotPath {
                    path,
                    answer: None,
                    confidence: 0.0,
                }),
            }
        }
        CotSpan::Prompt {
            template,
            max_answer_tokens,
        } => {
            let split = split_answer(question, &path, template, backend, *max_answer_tokens)?;
            let text = backend.render(&split.gen2.tokens);
            let answer = task.extract(&text).map(|e| e.value);
            let confidence = if answer.is_some() {
                cot_span_confidence(&split.gen2, 0..split.gen2.len())?.value
            } else {
                0.0
            };
            Ok(CotPath {
                path,
                answer,
                confidence,
            })
        }
    }
}
