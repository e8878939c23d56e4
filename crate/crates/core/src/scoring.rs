//! Path confidence.
//!
//! Each explored path is treated as a reasoning segment (`gen1`, the path
//! itself) followed by an answer segment (`gen2`, the greedy continuation
//! after an extraction template such as "So the answer is:"). The template
//! only extracts; it never changes `gen1`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};
use crate::lm::{greedy_rollout_traced, DecodedPath, LmBackend, StepDistribution, Token};

pub const DEFAULT_TEMPLATE: &str = "So the answer is:";

/// Extraction templates compared in the template ablation.
pub const TEMPLATES: [&str; 3] = [
    "So the answer is:",
    "Therefore, the answer is",
    "Final answer:",
];

pub const DEFAULT_MAX_ANSWER_TOKENS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningSplit {
    pub gen1: DecodedPath,
    pub gen2: DecodedPath,
    /// Distribution observed at each `gen2` step.
    pub gen2_steps: Vec<StepDistribution>,
    pub template: String,
}

/// Decodes the answer segment for `path`.
///
/// `gen2` is the greedy continuation of `question + gen1 + template`,
/// stopping at EOS, a newline token, or `max_answer_tokens`.
pub fn split_answer(
    question: &[Token],
    path: &DecodedPath,
    template: &str,
    backend: &dyn LmBackend,
    max_answer_tokens: usize,
) -> Result<ReasoningSplit> {
    let mut ctx = question.to_vec();
    ctx.extend(path.tokens.iter().cloned());
    ctx.extend(backend.encode(template)?);
    let (gen2, gen2_steps) =
        greedy_rollout_traced(backend, &ctx, max_answer_tokens, &|t: &Token| {
            t.is_newline()
        })?;
    Ok(ReasoningSplit {
        gen1: path.clone(),
        gen2,
        gen2_steps,
        template: template.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMethod {
    /// Length-aware top-2 probability gap.
    #[default]
    Gcot,
    SpanAlign,
    SpanAlignMean,
    Entropy,
    Logit,
    CotSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    pub value: f64,
    pub method: ScoreMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_factor: Option<f64>,
}

impl PathScore {
    pub fn new(value: f64, method: ScoreMethod) -> Self {
        Self {
            value,
            method,
            length_factor: None,
            gap_factor: None,
        }
    }

    pub fn zero(method: ScoreMethod) -> Self {
        Self::new(0.0, method)
    }
}

/// `log(1 + len) / max_i log(1 + len_i)`; 1 when every length is 0.
pub fn length_factor(len: usize, cohort_lens: &[usize]) -> f64 {
    let max = cohort_lens
        .iter()
        .copied()
        .chain(std::iter::once(len))
        .max()
        .unwrap_or(0);
    if max == 0 {
        return 1.0;
    }
    (len as f64).ln_1p() / (max as f64).ln_1p()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Length factor of `gen1` times the mean top-2 gap over `gen2`.
pub fn gcot_confidence(split: &ReasoningSplit, cohort_lens: &[usize]) -> PathScore {
    let lf = length_factor(split.gen1.len(), cohort_lens);
    if split.gen2.is_empty() {
        return PathScore {
            value: 0.0,
            method: ScoreMethod::Gcot,
            length_factor: Some(lf),
            gap_factor: Some(0.0),
        };
    }
    let gap = mean(split.gen2.top2_gaps.iter().copied());
    PathScore {
        value: lf * gap,
        method: ScoreMethod::Gcot,
        length_factor: Some(lf),
        gap_factor: Some(gap),
    }
}

/// A token after normalization, with the index of the token it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormToken {
    pub text: String,
    pub source: usize,
}

/// Unicode general category P*.
pub fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Lowercases tokens and removes those made only of punctuation.
///
/// Surrounding whitespace is trimmed first, so whitespace-only tokens are
/// removed too. Back-pointers (`source`) are 0-indexed.
pub fn normalize_for_lcs<'a, I>(texts: I) -> Vec<NormToken>
where
    I: IntoIterator<Item = &'a str>,
{
    texts
        .into_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let t = t.trim();
            if t.is_empty() || t.chars().all(is_punctuation) {
                return None;
            }
            Some(NormToken {
                text: t.to_lowercase(),
                source: i,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LcsAlignment {
    /// Aligned `(gen1, gen2)` index pairs, strictly increasing in both.
    pub pairs: Vec<(usize, usize)>,
}

impl LcsAlignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn terminal(&self) -> Option<(usize, usize)> {
        self.pairs.last().copied()
    }

    /// Maximal run of pairs ending at the terminal pair in which each pair
    /// is adjacent to the previous one in both sequences.
    pub fn terminal_run(&self) -> &[(usize, usize)] {
        let n = self.pairs.len();
        if n == 0 {
            return &[];
        }
        let mut start = n - 1;
        while start > 0 {
            let (a, b) = self.pairs[start - 1];
            let (c, d) = self.pairs[start];
            if a + 1 == c && b + 1 == d {
                start -= 1;
            } else {
                break;
            }
        }
        &self.pairs[start..]
    }
}

/// Token-level longest common subsequence (0-indexed pairs).
///
/// Among optimal alignments the backtrace prefers the rightmost matches:
/// the terminal pair has the largest possible `gen1` index and, given that,
/// the largest `gen2` index; earlier pairs follow the same rule.
pub fn lcs_align<S: AsRef<str>>(a: &[S], b: &[S]) -> LcsAlignment {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut dp = vec![0u32; (n + 1) * w];
    for i in 1..=n {
        for j in 1..=m {
            dp[i * w + j] = if a[i - 1].as_ref() == b[j - 1].as_ref() {
                dp[(i - 1) * w + j - 1] + 1
            } else {
                dp[(i - 1) * w + j].max(dp[i * w + j - 1])
            };
        }
    }
    // Within the prefixes a[..i], b[..j] (LCS length l), take the largest
    // i' and then the largest j' whose match extends an (l-1)-long LCS of
    // a[..i'-1], b[..j'-1]; such a pair always exists while l > 0.
    let mut l = dp[n * w + m];
    let mut pairs = Vec::with_capacity(l as usize);
    let (mut i, mut j) = (n, m);
    while l > 0 {
        let (ii, jj) = (1..=i)
            .rev()
            .find_map(|ii| {
                (1..=j).rev().find_map(|jj| {
                    (a[ii - 1].as_ref() == b[jj - 1].as_ref() && dp[(ii - 1) * w + jj - 1] == l - 1)
                        .then_some((ii, jj))
                })
            })
            .expect("optimal match exists");
        pairs.push((ii - 1, jj - 1));
        (i, j) = (ii - 1, jj - 1);
        l -= 1;
    }
    pairs.reverse();
    LcsAlignment { pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanAlignMode {
    #[default]
    Last,
    Mean,
}

/// Aligns normalized `gen1` and `gen2` and returns the alignment together
/// with the top-2 gaps of both sides, looked up through back-pointers.
fn aligned_gaps(split: &ReasoningSplit) -> (LcsAlignment, Vec<(f64, f64)>) {
    let n1 = normalize_for_lcs(split.gen1.tokens.iter().map(|t| t.text.as_str()));
    let n2 = normalize_for_lcs(split.gen2.tokens.iter().map(|t| t.text.as_str()));
    let t1: Vec<&str> = n1.iter().map(|t| t.text.as_str()).collect();
    let t2: Vec<&str> = n2.iter().map(|t| t.text.as_str()).collect();
    let al = lcs_align(&t1, &t2);
    let gaps = al
        .pairs
        .iter()
        .map(|&(i, j)| {
            (
                split.gen1.top2_gaps[n1[i].source],
                split.gen2.top2_gaps[n2[j].source],
            )
        })
        .collect();
    (al, gaps)
}

/// Gap sum over the terminal aligned span (or all aligned pairs) divided by
/// the alignment length. The value may exceed 1.
pub fn spanalign_confidence(split: &ReasoningSplit, mode: SpanAlignMode) -> PathScore {
    let method = match mode {
        SpanAlignMode::Last => ScoreMethod::SpanAlign,
        SpanAlignMode::Mean => ScoreMethod::SpanAlignMean,
    };
    if split.gen2.is_empty() {
        return PathScore::zero(method);
    }
    let (al, gaps) = aligned_gaps(split);
    let l = al.len();
    if l == 0 {
        return PathScore::zero(method);
    }
    let summed: f64 = match mode {
        SpanAlignMode::Last => {
            let run = al.terminal_run().len();
            gaps[l - run..].iter().map(|(g1, g2)| g1 + g2).sum()
        }
        SpanAlignMode::Mean => gaps.iter().map(|(g1, g2)| g1 + g2).sum(),
    };
    PathScore::new(summed / l as f64, method)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantMethod {
    Entropy,
    Logit,
}

/// Confidence from the answer-segment distributions.
///
/// `Entropy` averages `1 - H/log n` over `gen2` steps. `Logit` averages the
/// raw top-1 minus top-2 score; steps with a single visible candidate are
/// skipped because there is no second score.
pub fn variant_confidence(split: &ReasoningSplit, method: VariantMethod) -> Result<PathScore> {
    let steps = &split.gen2_steps;
    match method {
        VariantMethod::Entropy => Ok(PathScore::new(
            mean(steps.iter().map(StepDistribution::entropy_confidence)),
            ScoreMethod::Entropy,
        )),
        VariantMethod::Logit => {
            let mut gaps = Vec::with_capacity(steps.len());
            for s in steps {
                if let Some(g) = s.score_gap()? {
                    gaps.push(g);
                }
            }
            Ok(PathScore::new(mean(gaps.into_iter()), ScoreMethod::Logit))
        }
    }
}

/// Mean top-2 gap over `span` (token indices of `path`).
pub fn cot_span_confidence(path: &DecodedPath, span: Range<usize>) -> Result<PathScore> {
    if span.end > path.len() || span.start > span.end {
        return Err(Error::Config(format!(
            "span {span:?} outside path of {} tokens",
            path.len()
        )));
    }
    Ok(PathScore::new(
        mean(path.top2_gaps[span].iter().copied()),
        ScoreMethod::CotSpan,
    ))
}

/// Token indices whose rendered text overlaps the byte range `chars` of
/// `backend.render(tokens)`.
pub fn locate_span(
    backend: &dyn LmBackend,
    tokens: &[Token],
    bytes: Range<usize>,
) -> Option<Range<usize>> {
    let mut first = None;
    let mut last = None;
    for i in 0..tokens.len() {
        let end = backend.render(&tokens[..=i]).len();
        let start = end - tokens[i].text.len();
        if start < bytes.end && bytes.start < end {
            first.get_or_insert(i);
            last = Some(i);
        }
    }
    Some(first?..last? + 1)
}
