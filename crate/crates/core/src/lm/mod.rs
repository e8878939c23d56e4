//! Language-model backend contract and token-level decoding primitives.
//!
//! A backend exposes one operation that matters to the decoders: the ranked
//! candidate list at the next position given a context. Everything else in
//! the crate (branching, scoring, baselines) is written against [`LmBackend`].

mod http;
mod toy;

pub use http::{HttpBackend, HttpBackendConfig};
pub use toy::{ScriptBuilder, ToyLm};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved id of the end-of-sequence token.
pub const EOS_ID: u32 = 0;
/// Surface form of the end-of-sequence token in toy scripts.
pub const EOS_TEXT: &str = "<eos>";

/// Tolerance on the total probability mass of a candidate list.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: u32,
    pub text: String,
}

impl Token {
    pub fn new(id: u32, text: impl Into<String>) -> Self {
        Self {
            id,
            text: text.into(),
        }
    }

    pub fn eos() -> Self {
        Self::new(EOS_ID, EOS_TEXT)
    }

    pub fn is_eos(&self) -> bool {
        self.id == EOS_ID
    }

    pub fn is_newline(&self) -> bool {
        !self.is_eos() && self.text.contains('\n')
    }
}

/// One ranked entry of a [`StepDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: Token,
    pub prob: f64,
    /// Raw score (logit or log-probability) when the backend exposes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Candidate {
    pub fn new(token: Token, prob: f64) -> Self {
        Self {
            token,
            prob,
            score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }
}

/// Ranked candidate tokens with probabilities at one decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    candidates: Vec<Candidate>,
    context_length: usize,
}

impl StepDistribution {
    /// Validates and wraps a ranked candidate list.
    ///
    /// The list must be non-empty, sorted non-increasing by probability,
    /// every probability must lie in `[0, 1]`, and the total mass may not
    /// exceed `1 + MASS_TOLERANCE`.
    pub fn new(candidates: Vec<Candidate>, context_length: usize) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidDistribution("empty candidate list".into()));
        }
        let mut mass = 0.0;
        for (i, c) in candidates.iter().enumerate() {
            if !c.prob.is_finite() || !(0.0..=1.0).contains(&c.prob) {
                return Err(Error::InvalidDistribution(format!(
                    "probability {} of {:?} outside [0, 1]",
                    c.prob, c.token.text
                )));
            }
            if i > 0 && c.prob > candidates[i - 1].prob {
                return Err(Error::InvalidDistribution(format!(
                    "candidates not sorted at rank {}",
                    i + 1
                )));
            }
            mass += c.prob;
        }
        if mass > 1.0 + MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "total probability {mass} exceeds 1"
            )));
        }
        Ok(Self {
            candidates,
            context_length,
        })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn context_length(&self) -> usize {
        self.context_length
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn top(&self) -> &Candidate {
        &self.candidates[0]
    }

    /// Returns the candidate at a 1-indexed rank.
    pub fn candidate(&self, rank: usize) -> Result<&Candidate> {
        if rank == 0 {
            return Err(Error::Config("candidate ranks are 1-indexed".into()));
        }
        self.candidates.get(rank - 1).ok_or(Error::RankExceedsList {
            rank,
            available: self.candidates.len(),
        })
    }

    /// `p(x^1) - p(x^2)`; a missing second candidate counts as probability 0.
    pub fn top2_gap(&self) -> f64 {
        let p1 = self.candidates[0].prob;
        let p2 = self.candidates.get(1).map_or(0.0, |c| c.prob);
        p1 - p2
    }

    /// Raw-score margin between the top two candidates.
    ///
    /// `Ok(None)` when only one candidate is visible, since there is no
    /// second raw score to compare against.
    pub fn score_gap(&self) -> Result<Option<f64>> {
        let s1 = self.candidates[0].score.ok_or(Error::BackendLacksLogits)?;
        match self.candidates.get(1) {
            Some(c) => Ok(Some(s1 - c.score.ok_or(Error::BackendLacksLogits)?)),
            None => Ok(None),
        }
    }

    /// `1 - H / log n` over the visible candidates renormalized to sum 1.
    pub fn entropy_confidence(&self) -> f64 {
        let n = self.candidates.len();
        let mass: f64 = self.candidates.iter().map(|c| c.prob).sum();
        if n < 2 || mass <= 0.0 {
            return 1.0;
        }
        let entropy: f64 = self
            .candidates
            .iter()
            .map(|c| c.prob / mass)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        (1.0 - entropy / (n as f64).ln()).clamp(0.0, 1.0)
    }
}

/// Returns the `rank`-th candidate token (1-indexed).
pub fn candidate_at_rank(dist: &StepDistribution, rank: usize) -> Result<Token> {
    dist.candidate(rank).map(|c| c.token.clone())
}

/// A decoded token sequence with per-token confidences.
///
/// Vectors are stored 0-indexed; position `t` in the 1-indexed notation used
/// by the backtracking rule is element `t - 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodedPath {
    pub tokens: Vec<Token>,
    pub chosen_probs: Vec<f64>,
    pub top2_gaps: Vec<f64>,
    /// First-step candidate rank this path was seeded from.
    pub seed_rank: Option<usize>,
    /// 1-indexed backtracking position `b` that produced this path.
    pub backtrack_at: Option<usize>,
    /// Rank of the replacement token at position `b - 1`.
    pub rebranch_rank: Option<usize>,
    /// True when the path ended at EOS (or a stop token), false on truncation.
    pub finished: bool,
}

impl DecodedPath {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn push(&mut self, token: Token, prob: f64, gap: f64) {
        self.tokens.push(token);
        self.chosen_probs.push(prob);
        self.top2_gaps.push(gap);
    }

    /// Appends the token chosen at `rank` from `dist`.
    pub fn push_ranked(&mut self, dist: &StepDistribution, rank: usize) -> Result<()> {
        let c = dist.candidate(rank)?;
        self.push(c.token.clone(), c.prob, dist.top2_gap());
        Ok(())
    }

    /// Keeps the first `len` tokens.
    pub fn truncate(&mut self, len: usize) {
        self.tokens.truncate(len);
        self.chosen_probs.truncate(len);
        self.top2_gaps.truncate(len);
    }

    pub fn same_tokens(&self, other: &DecodedPath) -> bool {
        self.tokens == other.tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Eos,
    StopToken,
    MaxTokens,
}

/// Distributions observed along a greedy continuation.
#[derive(Debug, Clone)]
pub struct GreedyTrace {
    /// One distribution per emitted token; the emitted token is rank 1.
    pub steps: Vec<StepDistribution>,
    pub stop: StopReason,
}

/// Never stops early.
pub fn no_stop(_: &Token) -> bool {
    false
}

pub trait LmBackend: Send + Sync {
    /// Ranked candidates at the position following `context`.
    fn next_distribution(&self, context: &[Token]) -> Result<StepDistribution>;

    /// Largest candidate rank this backend can expose.
    fn max_visible_rank(&self) -> usize;

    /// Converts prompt text into context tokens.
    fn encode(&self, text: &str) -> Result<Vec<Token>>;

    /// Renders generated tokens as text.
    fn render(&self, tokens: &[Token]) -> String {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Greedy continuation from `context` for at most `max_tokens` tokens.
    ///
    /// The default implementation queries one position at a time. Backends
    /// that can return a whole greedy continuation in one request override it.
    fn greedy_steps(
        &self,
        context: &[Token],
        max_tokens: usize,
        stop: &dyn Fn(&Token) -> bool,
    ) -> Result<GreedyTrace> {
        let mut ctx = context.to_vec();
        let mut steps = Vec::new();
        while steps.len() < max_tokens {
            let dist = self.next_distribution(&ctx)?;
            let top = dist.top().token.clone();
            if top.is_eos() {
                return Ok(GreedyTrace {
                    steps,
                    stop: StopReason::Eos,
                });
            }
            if stop(&top) {
                return Ok(GreedyTrace {
                    steps,
                    stop: StopReason::StopToken,
                });
            }
            ctx.push(top);
            steps.push(dist);
        }
        Ok(GreedyTrace {
            steps,
            stop: StopReason::MaxTokens,
        })
    }
}

/// Greedy rollout that also returns the distribution seen at every step.
pub fn greedy_rollout_traced(
    backend: &dyn LmBackend,
    prefix: &[Token],
    max_tokens: usize,
    stop: &dyn Fn(&Token) -> bool,
) -> Result<(DecodedPath, Vec<StepDistribution>)> {
    if max_tokens == 0 {
        return Err(Error::Config("max_tokens must be at least 1".into()));
    }
    let trace = backend.greedy_steps(prefix, max_tokens, stop)?;
    let mut path = DecodedPath::default();
    for dist in &trace.steps {
        path.push_ranked(dist, 1)?;
    }
    path.finished = trace.stop != StopReason::MaxTokens;
    Ok((path, trace.steps))
}

/// Appends the rank-1 candidate at every step until EOS or `max_tokens`.
pub fn greedy_rollout(
    backend: &dyn LmBackend,
    prefix: &[Token],
    max_tokens: usize,
) -> Result<DecodedPath> {
    greedy_rollout_traced(backend, prefix, max_tokens, &no_stop).map(|(p, _)| p)
}

/// Forces the token at `rank` after `head`, then completes greedily.
///
/// `head` holds already-decoded tokens following `context`; `dist` is the
/// distribution at the position right after `head`. The returned path is
/// capped at `max_len` tokens in total.
pub fn branch_and_complete(
    backend: &dyn LmBackend,
    context: &[Token],
    head: &DecodedPath,
    dist: &StepDistribution,
    rank: usize,
    max_len: usize,
) -> Result<DecodedPath> {
    let chosen = dist.candidate(rank)?;
    let mut path = head.clone();
    path.finished = false;
    if chosen.token.is_eos() {
        path.finished = true;
        return Ok(path);
    }
    path.push_ranked(dist, rank)?;
    let remaining = max_len.saturating_sub(path.len());
    if remaining == 0 {
        return Ok(path);
    }
    let mut ctx = Vec::with_capacity(context.len() + path.len());
    ctx.extend_from_slice(context);
    ctx.extend(path.tokens.iter().cloned());
    let tail = greedy_rollout(backend, &ctx, remaining)?;
    path.tokens.extend(tail.tokens);
    path.chosen_probs.extend(tail.chosen_probs);
    path.top2_gaps.extend(tail.top2_gaps);
    path.finished = tail.finished;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(id: u32, s: &str) -> Token {
        Token::new(id, s)
    }

    fn dist(ps: &[(&str, f64)]) -> StepDistribution {
        let c = ps
            .iter()
            .enumerate()
            .map(|(i, (s, p))| Candidate::new(tok(i as u32 + 1, s), *p))
            .collect();
        StepDistribution::new(c, 0).unwrap()
    }

    #[test]
    fn rejects_unsorted_and_overfull_lists() {
        let bad = vec![
            Candidate::new(tok(1, "a"), 0.2),
            Candidate::new(tok(2, "b"), 0.5),
        ];
        assert!(StepDistribution::new(bad, 0).is_err());
        let heavy = vec![
            Candidate::new(tok(1, "a"), 0.7),
            Candidate::new(tok(2, "b"), 0.4),
        ];
        assert!(StepDistribution::new(heavy, 0).is_err());
        assert!(StepDistribution::new(vec![], 0).is_err());
        let neg = vec![Candidate::new(tok(1, "a"), -0.1)];
        assert!(StepDistribution::new(neg, 0).is_err());
    }

    #[test]
    fn ranks_are_one_indexed() {
        let d = dist(&[("A", 0.6), ("B", 0.3), ("C", 0.1)]);
        assert_eq!(candidate_at_rank(&d, 1).unwrap().text, "A");
        assert_eq!(candidate_at_rank(&d, 3).unwrap().text, "C");
        assert!(matches!(
            candidate_at_rank(&d, 4),
            Err(Error::RankExceedsList {
                rank: 4,
                available: 3
            })
        ));
        assert!(candidate_at_rank(&d, 0).is_err());
    }

    #[test]
    fn single_candidate_gap_is_its_probability() {
        let d = dist(&[("A", 0.7)]);
        assert_eq!(d.top2_gap(), 0.7);
    }

    #[test]
    fn entropy_confidence_extremes() {
        assert_eq!(dist(&[("A", 1.0), ("B", 0.0)]).entropy_confidence(), 1.0);
        assert!(dist(&[("A", 0.5), ("B", 0.5)]).entropy_confidence().abs() < 1e-12);
        // renormalization: two equal candidates with leftover mass still max entropy
        assert!(dist(&[("A", 0.3), ("B", 0.3)]).entropy_confidence().abs() < 1e-12);
    }

    #[test]
    fn score_gap_requires_scores() {
        let d = dist(&[("A", 0.6), ("B", 0.4)]);
        assert!(matches!(d.score_gap(), Err(Error::BackendLacksLogits)));
        let c = vec![
            Candidate::new(tok(1, "a"), 0.6).with_score(3.0),
            Candidate::new(tok(2, "b"), 0.4).with_score(1.5),
        ];
        let d = StepDistribution::new(c, 0).unwrap();
        assert_eq!(d.score_gap().unwrap(), Some(1.5));
    }
}
