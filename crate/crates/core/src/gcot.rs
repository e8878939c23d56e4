//! End-to-end decoder: explore, split each path into reasoning and answer,
//! score, then aggregate the answers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, Aggregation, AggregationConfig, Embedder};
use crate::error::{Error, Result};
use crate::explore::{explore, BranchConfig};
use crate::lm::{DecodedPath, LmBackend, Token};
use crate::scoring::{
    gcot_confidence, spanalign_confidence, split_answer, variant_confidence, PathScore,
    ReasoningSplit, ScoreMethod, SpanAlignMode, VariantMethod, DEFAULT_MAX_ANSWER_TOKENS,
    DEFAULT_TEMPLATE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcotConfig {
    pub branch: BranchConfig,
    pub score: ScoreMethod,
    pub aggregation: AggregationConfig,
    pub template: String,
    pub max_answer_tokens: usize,
}

impl Default for GcotConfig {
    fn default() -> Self {
        Self {
            branch: BranchConfig::default(),
            score: ScoreMethod::Gcot,
            aggregation: AggregationConfig::default(),
            template: DEFAULT_TEMPLATE.to_string(),
            max_answer_tokens: DEFAULT_MAX_ANSWER_TOKENS,
        }
    }
}

impl GcotConfig {
    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.aggregation.validate()?;
        if self.score == ScoreMethod::CotSpan {
            return Err(Error::Config(
                "span confidence needs an extracted span; use cot-decoding".into(),
            ));
        }
        if self.max_answer_tokens == 0 {
            return Err(Error::Config("max_answer_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPath {
    /// Reasoning segment (`gen1`).
    pub path: DecodedPath,
    /// Answer segment (`gen2`).
    pub gen2: DecodedPath,
    pub reasoning: String,
    pub answer: String,
    pub score: PathScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcotOutcome {
    pub paths: Vec<ScoredPath>,
    pub trigger_count: usize,
    pub aggregation: Aggregation,
}

impl GcotOutcome {
    pub fn selected(&self) -> &ScoredPath {
        &self.paths[self.aggregation.path_index]
    }

    pub fn answer(&self) -> &str {
        &self.aggregation.answer
    }
}

fn score_split(split: &ReasoningSplit, method: ScoreMethod, cohort: &[usize]) -> Result<PathScore> {
    match method {
        ScoreMethod::Gcot => Ok(gcot_confidence(split, cohort)),
        ScoreMethod::SpanAlign => Ok(spanalign_confidence(split, SpanAlignMode::Last)),
        ScoreMethod::SpanAlignMean => Ok(spanalign_confidence(split, SpanAlignMode::Mean)),
        ScoreMethod::Entropy => variant_confidence(split, VariantMethod::Entropy),
        ScoreMethod::Logit => variant_confidence(split, VariantMethod::Logit),
        ScoreMethod::CotSpan => Err(Error::Config("unsupported score method".into())),
    }
}

/// Decodes the answer of every path and scores it against the cohort.
pub fn score_paths(
    question: &[Token],
    paths: Vec<DecodedPath>,
    cfg: &GcotConfig,
    backend: &dyn LmBackend,
) -> Result<Vec<ScoredPath>> {
    let splits: Vec<ReasoningSplit> = paths
        .par_iter()
        .map(|p| split_answer(question, p, &cfg.template, backend, cfg.max_answer_tokens))
        .collect::<Result<_>>()?;
    let cohort: Vec<usize> = splits.iter().map(|s| s.gen1.len()).collect();
    splits
        .into_iter()
        .map(|s| {
            let score = score_split(&s, cfg.score, &cohort)?;
            Ok(ScoredPath {
                reasoning: backend.render(&s.gen1.tokens),
                answer: backend.render(&s.gen2.tokens).trim().to_string(),
                path: s.gen1,
                gen2: s.gen2,
                score,
            })
        })
        .collect()
}

pub fn gcot_decode(
    question: &[Token],
    cfg: &GcotConfig,
    backend: &dyn LmBackend,
    embedder: &dyn Embedder,
    rng_seed: u64,
) -> Result<GcotOutcome> {
    cfg.validate()?;
    let explored = explore(question, &cfg.branch, backend, rng_seed)?;
    let paths = score_paths(question, explored.paths, cfg, backend)?;
    let answers: Vec<String> = paths.iter().map(|p| p.answer.clone()).collect();
    let confs: Vec<f64> = paths.iter().map(|p| p.score.value).collect();
    let aggregation = aggregate(&answers, &confs, &cfg.aggregation, embedder)?;
    Ok(GcotOutcome {
        paths,
        trigger_count: explored.trigger_count,
        aggregation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{HashEmbedder, Strategy};
    use crate::explore::{Backtracking, Seeding};
    use crate::lm::{greedy_rollout, ScriptBuilder};

    /// Two first-step options with different reasoning lengths, both
    /// answering after the template.
    fn script() -> ScriptBuilder {
        let mut s = ScriptBuilder::new();
        s.entry("Q", &[("a", 0.6), ("b", 0.3)]);
        s.entry("Q a", &[("<eos>", 1.0)]);
        s.entry("Q b", &[("c", 0.9), ("d", 0.1)]);
        s.entry("Q b c", &[("<eos>", 1.0)]);
        s.entry("Q a So the answer is:", &[("1", 0.5), ("2", 0.4)]);
        s.entry("Q a So the answer is: 1", &[("<eos>", 1.0)]);
        s.entry("Q b c So the answer is:", &[("2", 0.9), ("1", 0.05)]);
        s.entry("Q b c So the answer is: 2", &[("<eos>", 1.0)]);
        s
    }

    #[test]
    fn decodes_and_selects_confident_answer() {
        let lm = script().build().unwrap();
        let q = lm.encode("Q").unwrap();
        let cfg = GcotConfig {
            branch: BranchConfig {
                k: 2,
                ..BranchConfig::default()
            },
            ..GcotConfig::default()
        };
        let out = gcot_decode(&q, &cfg, &lm, &HashEmbedder::default(), 0).unwrap();
        assert_eq!(out.paths.len(), 2);
        // lengths 1 and 2: factors ln2/ln3 and 1
        let lf = 2f64.ln() / 3f64.ln();
        assert!((out.paths[0].score.value - lf * 0.1).abs() < 1e-12);
        assert!((out.paths[1].score.value - 0.85).abs() < 1e-12);
        assert_eq!(out.answer(), "2");
        assert_eq!(out.selected().reasoning, "b c");
    }

    #[test]
    fn one_branch_maxpath_is_greedy() {
        let lm = script().build().unwrap();
        let q = lm.encode("Q").unwrap();
        let cfg = GcotConfig {
            branch: BranchConfig {
                seeding: Seeding::OneBranch,
                backtracking: Backtracking::None,
                ..BranchConfig::default()
            },
            aggregation: AggregationConfig {
                strategy: Strategy::Maxpath,
                ..AggregationConfig::default()
            },
            ..GcotConfig::default()
        };
        let out = gcot_decode(&q, &cfg, &lm, &HashEmbedder::default(), 0).unwrap();
        let g = greedy_rollout(&lm, &q, 256).unwrap();
        assert_eq!(out.selected().path.tokens, g.tokens);
    }

    #[test]
    fn rejects_span_scoring() {
        let cfg = GcotConfig {
            score: ScoreMethod::CotSpan,
            ..GcotConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
