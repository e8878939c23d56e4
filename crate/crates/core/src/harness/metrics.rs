//! Answer-level metrics.

use std::collections::HashMap;

use crate::extract::TaskKind;
use crate::scoring::is_punctuation;

/// Per-character lowercase and whitespace collapse.
///
/// Lowercasing char by char keeps the result context free, so appending
/// text never changes how earlier characters fold.
pub fn casefold(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// 1 when some non-blank gold answer occurs inside the response after
/// [`casefold`], else 0.
pub fn match_metric<S: AsRef<str>>(response: &str, gold: &[S]) -> u8 {
    let r = casefold(response);
    gold.iter()
        .map(|g| casefold(g.as_ref()))
        .any(|g| !g.is_empty() && r.contains(&g)) as u8
}

/// Exact-answer accuracy for fixed-answer tasks.
///
/// Numeric answers compare by value when both sides parse; binary answers
/// compare case-insensitively.
pub fn fixed_correct<S: AsRef<str>>(task: TaskKind, predicted: Option<&str>, gold: &[S]) -> bool {
    let Some(p) = predicted else { return false };
    gold.iter().any(|g| {
        let g = g.as_ref().trim();
        match task {
            TaskKind::FixedNumeric => {
                let clean = |s: &str| s.replace(',', "");
                match (clean(p).parse::<f64>(), clean(g).parse::<f64>()) {
                    (Ok(a), Ok(b)) => a == b,
                    _ => casefold(p) == casefold(g),
                }
            }
            _ => casefold(p) == casefold(g),
        }
    })
}

/// Whitespace tokens with every punctuation character split off on its own.
pub fn bleu_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in s.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

pub const BLEU_MAX_N: usize = 4;

/// Sentence BLEU up to 4-grams.
///
/// Unigram precision is unsmoothed; higher orders use add-one smoothing
/// `(matches + 1) / (total + 1)`. Counts are clipped by the maximum count
/// in any single reference. The brevity penalty uses the reference length
/// closest to the candidate (shorter on ties). Empty candidates score 0.
pub fn bleu<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    let cand = bleu_tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| bleu_tokens(r.as_ref())).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_N {
        let cc = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matches: usize = cc
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let p = if n == 1 {
            matches as f64 / total as f64
        } else {
            (matches as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0);
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * (log_sum / BLEU_MAX_N as f64).exp()
}
