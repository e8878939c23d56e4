//! Brute-force reference implementations and randomized verification
//! suites.
//!
//! Every reference here is written independently of the production code it
//! checks and favours obviousness over speed.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aggregate::{
    cluster_embedded, select_answer, AggregationConfig, Embedder, HashEmbedder, Strategy,
};
use crate::baselines::{beam_search, greedy_decode, topk_sample, SamplerConfig};
use crate::explore::{find_backtrack_point, Backtracking, BranchConfig, Seeding};
use crate::gcot::{gcot_decode, GcotConfig};
use crate::harness::metrics::{bleu, bleu_tokens, BLEU_MAX_N};
use crate::lm::{LmBackend, ScriptBuilder, ToyLm};
use crate::scoring::{lcs_align, DEFAULT_TEMPLATE};

/// Scans every position against the written definition of a backtracking
/// point and returns the smallest one.
pub fn brute_backtrack_point(conf: &[f64], delta: f64) -> Option<usize> {
    let n = conf.len();
    let s = |t: usize| conf[t - 1];
    let mut set = Vec::new();
    for t in 1..=n {
        if t < 3 {
            continue;
        }
        let below_left = s(t) < s(t - 1);
        let below_right = if t < n { s(t) < s(t + 1) } else { true };
        if below_left && below_right && s(t) < delta {
            set.push(t);
        }
    }
    set.into_iter().min()
}

fn is_subsequence<T: PartialEq>(needle: &[&T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == *x))
}

/// LCS length by trying every subsequence of the shorter list.
pub fn brute_lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() < 24, "exhaustive LCS limited to short lists");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let sub: Vec<&T> = (0..short.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| &short[i])
            .collect();
        if is_subsequence(&sub, long) {
            best = size;
        }
    }
    best
}

fn index_sets(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Terminal pair chosen by the rightmost rule: over every maximum-length
/// common subsequence alignment, the largest last index into `a`, then the
/// largest last index into `b`.
pub fn brute_rightmost_terminal<T: PartialEq>(a: &[T], b: &[T]) -> Option<(usize, usize)> {
    let l = brute_lcs_len(a, b);
    if l == 0 {
        return None;
    }
    let mut best: Option<(usize, usize)> = None;
    let bs = index_sets(b.len(), l);
    for ia in index_sets(a.len(), l) {
        for ib in &bs {
            if ia.iter().zip(ib).all(|(&i, &j)| a[i] == b[j]) {
                let t = (ia[l - 1], ib[l - 1]);
                if best.is_none_or(|bt| t > bt) {
                    best = Some(t);
                }
            }
        }
    }
    best
}

/// Number of distinct terminal pairs over all maximum alignments.
pub fn brute_terminal_count<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let l = brute_lcs_len(a, b);
    if l == 0 {
        return 0;
    }
    let mut seen = Vec::new();
    let bs = index_sets(b.len(), l);
    for ia in index_sets(a.len(), l) {
        for ib in &bs {
            if ia.iter().zip(ib).all(|(&i, &j)| a[i] == b[j]) {
                let t = (ia[l - 1], ib[l - 1]);
                if !seen.contains(&t) {
                    seen.push(t);
                }
            }
        }
    }
    seen.len()
}

fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if uu == 0.0 || vv == 0.0 {
        0.0
    } else if u == v {
        1.0
    } else {
        (dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCluster {
    pub members: Vec<usize>,
    pub total: f64,
}

/// Direct transcription of greedy first-fit clustering: each answer goes
/// to the first existing cluster (by creation order) whose founding
/// answer is at least `tau` similar, else founds a new one.
pub fn brute_cluster(embeddings: &[Vec<f64>], confs: &[f64], tau: f64) -> Vec<OracleCluster> {
    let mut clusters: Vec<OracleCluster> = Vec::new();
    for i in 0..embeddings.len() {
        let mut home = None;
        for (j, c) in clusters.iter().enumerate() {
            if oracle_cosine(&embeddings[i], &embeddings[c.members[0]]) >= tau {
                home = Some(j);
                break;
            }
        }
        match home {
            Some(j) => {
                clusters[j].members.push(i);
                clusters[j].total += confs[i];
            }
            None => clusters.push(OracleCluster {
                members: vec![i],
                total: confs[i],
            }),
        }
    }
    clusters
}

fn count_ngram(tokens: &[String], gram: &[String]) -> usize {
    let n = gram.len();
    if tokens.len() < n {
        return 0;
    }
    (0..=tokens.len() - n)
        .filter(|&i| (0..n).all(|k| tokens[i + k] == gram[k]))
        .count()
}

/// BLEU by explicit n-gram enumeration, without hashing.
pub fn brute_bleu(candidate: &str, references: &[String]) -> f64 {
    let c = bleu_tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| bleu_tokens(r)).collect();
    if c.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut precisions = Vec::new();
    for n in 1..=BLEU_MAX_N {
        let mut total = 0usize;
        let mut clipped = 0usize;
        if c.len() >= n {
            for i in 0..=c.len() - n {
                let gram = &c[i..i + n];
                total += 1;
                // count each distinct n-gram once at its first occurrence
                if (0..i).any(|j| c[j..j + n] == *gram) {
                    continue;
                }
                let in_cand = count_ngram(&c, gram);
                let in_ref = refs.iter().map(|r| count_ngram(r, gram)).max().unwrap_or(0);
                clipped += in_cand.min(in_ref);
            }
        }
        let p = if n == 1 {
            clipped as f64 / total as f64
        } else {
            (clipped + 1) as f64 / (total + 1) as f64
        };
        precisions.push(p);
    }
    if precisions.contains(&0.0) {
        return 0.0;
    }
    let mut r = refs[0].len();
    for rf in &refs[1..] {
        let (d_new, d_old) = (rf.len().abs_diff(c.len()), r.abs_diff(c.len()));
        if d_new < d_old || (d_new == d_old && rf.len() < r) {
            r = rf.len();
        }
    }
    let bp = if c.len() >= r {
        1.0
    } else {
        (1.0 - r as f64 / c.len() as f64).exp()
    };
    let geo = precisions.iter().map(|p| p.ln()).sum::<f64>() / BLEU_MAX_N as f64;
    bp * geo.exp()
}

/// Result of one verification suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub mismatches: usize,
    /// First mismatch, for diagnosis.
    pub example: Option<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            mismatches: 0,
            example: None,
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.mismatches += 1;
            if self.example.is_none() {
                self.example = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.cases > 0
    }
}

pub const BACKTRACK_DELTAS: [f64; 3] = [0.1, 0.2, 0.3];

/// Random confidence sequences (lengths 1..=50) against the brute scan.
pub fn backtrack_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = SuiteReport::new("backtrack-point");
    for i in 0..cases {
        let n = rng.random_range(1..=50);
        // coarse values make ties and threshold hits common
        let conf: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    rng.random_range(0..=10) as f64 / 20.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let delta = BACKTRACK_DELTAS[i % BACKTRACK_DELTAS.len()];
        let got = find_backtrack_point(&conf, delta);
        let want = brute_backtrack_point(&conf, delta);
        rep.check(got == want, || {
            format!("{conf:?} delta={delta}: got {got:?}, want {want:?}")
        });
    }
    rep
}

/// Restricted-growth strings over at most `k` symbols: every sequence up
/// to relabeling of the alphabet, listed once.
fn canonical_strings(len: usize, k: u8) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn rec(len: usize, k: u8, used: u8, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for s in 0..(used + 1).min(k) {
            cur.push(s);
            rec(len, k, used.max(s + 1), cur, out);
            cur.pop();
        }
    }
    rec(len, k, 0, &mut cur, &mut out);
    out
}

pub const LCS_ALPHABET: u8 = 4;
pub const LCS_MAX_LEN: usize = 8;
/// Combined length up to which every pair is enumerated.
pub const LCS_EXHAUSTIVE_TOTAL: usize = 10;

/// LCS length against the exhaustive reference.
///
/// Every pair `(a, b)` over a 4-symbol alphabet with `|a|, |b| <= 8` and
/// `|a| + |b| <= 10` is checked once per alphabet relabeling class (the
/// LCS length is invariant under relabeling). `random_pairs` further pairs
/// with both sides up to length 8 are drawn at random.
pub fn lcs_length_suite(seed: u64, random_pairs: usize) -> SuiteReport {
    let mut rep = SuiteReport::new("lcs-length");
    let check = |rep: &mut SuiteReport, a: &[u8], b: &[u8]| {
        let got = lcs_align(&sym(a), &sym(b)).len();
        let want = brute_lcs_len(a, b);
        rep.check(got == want, || {
            format!("{a:?} vs {b:?}: got {got}, want {want}")
        });
    };
    for total in 0..=LCS_EXHAUSTIVE_TOTAL {
        for s in canonical_strings(total, LCS_ALPHABET) {
            for cut in 0..=total {
                if cut > LCS_MAX_LEN || total - cut > LCS_MAX_LEN {
                    continue;
                }
                check(&mut rep, &s[..cut], &s[cut..]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_pairs {
        let a = random_symbols(&mut rng, LCS_MAX_LEN, LCS_ALPHABET);
        let b = random_symbols(&mut rng, LCS_MAX_LEN, LCS_ALPHABET);
        check(&mut rep, &a, &b);
    }
    rep
}

fn sym(xs: &[u8]) -> Vec<String> {
    xs.iter()
        .map(|x| ((b'a' + x) as char).to_string())
        .collect()
}

fn random_symbols(rng: &mut impl Rng, max_len: usize, k: u8) -> Vec<u8> {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// Terminal pair against the brute rightmost rule on random pairs that
/// admit more than one terminal pair.
pub fn lcs_tie_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = SuiteReport::new("lcs-rightmost-terminal");
    while rep.cases < cases {
        let k = rng.random_range(2..=LCS_ALPHABET);
        let a = random_symbols(&mut rng, LCS_MAX_LEN, k);
        let b = random_symbols(&mut rng, LCS_MAX_LEN, k);
        if brute_terminal_count(&a, &b) < 2 {
            continue;
        }
        let got = lcs_align(&sym(&a), &sym(&b)).terminal();
        let want = brute_rightmost_terminal(&a, &b);
        rep.check(got == want, || {
            format!("{a:?} vs {b:?}: got {got:?}, want {want:?}")
        });
    }
    rep
}

const ANSWER_WORDS: [&str; 6] = ["red", "blue", "car", "the", "big", "7"];

/// Short random answer phrase drawn from a small vocabulary.
pub fn random_answer(rng: &mut impl Rng) -> String {
    let n = rng.random_range(0..=3);
    (0..n)
        .map(|_| *ANSWER_WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Production clustering against [`brute_cluster`] with the hash embedder.
///
/// Confidences are multiples of 1/1024 so that cluster totals are exact in
/// floating point and the conservation check can use equality.
pub fn cluster_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = HashEmbedder::default();
    let mut rep = SuiteReport::new("greedy-clustering");
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let answers: Vec<String> = (0..n).map(|_| random_answer(&mut rng)).collect();
        let confs: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..=1024) as f64 / 1024.0)
            .collect();
        let tau = rng.random_range(1..=10) as f64 / 10.0;
        let embs: Vec<Vec<f64>> = answers.iter().map(|a| emb.embed(a).unwrap()).collect();
        let got = cluster_embedded(&answers, &confs, &embs, tau).unwrap();
        let want = brute_cluster(&embs, &confs, tau);
        let same_members = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| {
                g.members.iter().map(|m| m.index).collect::<Vec<_>>() == w.members
                    && g.representative == answers[w.members[0]]
                    && g.cumulative == w.total
            });
        let sum_c: f64 = got.iter().map(|c| c.cumulative).sum();
        let sum_i: f64 = confs.iter().sum();
        let above_tau = got.iter().all(|c| {
            let rep_emb = &embs[c.members[0].index];
            c.members[1..]
                .iter()
                .all(|m| oracle_cosine(&embs[m.index], rep_emb) >= tau)
        });
        rep.check(same_members && sum_c == sum_i && above_tau, || {
            format!(
                "answers {answers:?} confs {confs:?} tau {tau}: members_ok={same_members} \
                 sum {sum_c} vs {sum_i} above_tau={above_tau}"
            )
        });
    }
    rep
}

pub const SCALE_FACTORS: [f64; 3] = [0.5, 3.0, 100.0];

/// Selected answer is unchanged when all confidences are scaled by a
/// positive constant.
pub fn scaling_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = HashEmbedder::default();
    let mut rep = SuiteReport::new("scale-invariance");
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let answers: Vec<String> = (0..n).map(|_| random_answer(&mut rng)).collect();
        let confs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let tau = rng.random_range(5..=10) as f64 / 10.0;
        let embs: Vec<Vec<f64>> = answers.iter().map(|a| emb.embed(a).unwrap()).collect();
        let base = cluster_embedded(&answers, &confs, &embs, tau).unwrap();
        let pick = select_answer(&base).map(str::to_string);
        for c in SCALE_FACTORS {
            let scaled: Vec<f64> = confs.iter().map(|x| x * c).collect();
            let cl = cluster_embedded(&answers, &scaled, &embs, tau).unwrap();
            let p = select_answer(&cl).map(str::to_string);
            rep.check(p == pick, || {
                format!("answers {answers:?} confs {confs:?} x{c}: {p:?} vs {pick:?}")
            });
        }
    }
    rep
}

pub const BLEU_TOLERANCE: f64 = 1e-9;
const BLEU_WORDS: [&str; 7] = ["the", "cat", "sat", "on", "mat", "a", "."];

fn random_sentence(rng: &mut impl Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| *BLEU_WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// BLEU against [`brute_bleu`] on random short pairs.
pub fn bleu_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = SuiteReport::new("bleu");
    for _ in 0..cases {
        let cand = random_sentence(&mut rng, 8);
        let nrefs = rng.random_range(1..=3);
        let refs: Vec<String> = (0..nrefs).map(|_| random_sentence(&mut rng, 8)).collect();
        let got = bleu(&cand, &refs);
        let want = brute_bleu(&cand, &refs);
        rep.check((got - want).abs() <= BLEU_TOLERANCE, || {
            format!("{cand:?} vs {refs:?}: {got} vs {want}")
        });
    }
    rep
}

const SCRIPT_WORDS: [&str; 6] = ["w0", "w1", "w2", "w3", "w4", "w5"];
const SCRIPT_ANSWERS: [&str; 3] = ["a0", "a1", "a2"];

/// Random toy script rooted at the question `q`.
///
/// Every reachable context has an entry, and every context that can end
/// (by EOS or depth) has an answer continuation after the default
/// template, so any decoder can run on it without script misses.
pub fn random_script(rng: &mut impl Rng, max_depth: usize) -> ScriptBuilder {
    let mut s = ScriptBuilder::new();
    grow(&mut s, rng, "q".to_string(), 0, max_depth);
    s
}

fn random_probs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let mass = rng.random_range(0.5..=1.0) / w.iter().sum::<f64>();
    let mut p: Vec<f64> = w.iter().map(|x| x * mass).collect();
    p.sort_by(|a, b| b.total_cmp(a));
    p
}

fn grow(s: &mut ScriptBuilder, rng: &mut impl Rng, ctx: String, depth: usize, max_depth: usize) {
    let toks: Vec<&str> = if depth >= max_depth {
        vec!["<eos>"]
    } else {
        let n = rng.random_range(1..=3);
        let mut pool: Vec<&str> = SCRIPT_WORDS.to_vec();
        pool.push("<eos>");
        pool.choose_multiple(rng, n).copied().collect()
    };
    let probs = random_probs(rng, toks.len());
    let cands: Vec<(&str, f64)> = toks.iter().copied().zip(probs).collect();
    s.entry(&ctx, &cands);
    if toks.contains(&"<eos>") {
        let tctx = format!("{ctx} {DEFAULT_TEMPLATE}");
        let n = rng.random_range(1..=SCRIPT_ANSWERS.len());
        let answers: Vec<&str> = SCRIPT_ANSWERS.choose_multiple(rng, n).copied().collect();
        let probs = random_probs(rng, answers.len());
        let list: Vec<(&str, f64)> = answers.iter().copied().zip(probs).collect();
        s.entry(&tctx, &list);
        for a in answers {
            s.entry(&format!("{tctx} {a}"), &[("<eos>", 1.0)]);
        }
    }
    for t in toks {
        if t != "<eos>" {
            grow(s, rng, format!("{ctx} {t}"), depth + 1, max_depth);
        }
    }
}

/// Text of greedy, beam(1), top-k(1) and the one-branch, no-backtracking,
/// MaxPath GCoT configuration, in that order.
pub fn reduction_texts(lm: &ToyLm, rng_seed: u64) -> crate::Result<[String; 4]> {
    let q = lm.encode("q")?;
    let sampler = SamplerConfig {
        beam_width: 1,
        top_k: 1,
        rng_seed,
        ..SamplerConfig::default()
    };
    let greedy = greedy_decode(&q, lm, sampler.max_tokens)?;
    let beam = beam_search(&q, &sampler, lm)?;
    let topk = topk_sample(&q, &sampler, lm)?;
    let cfg = GcotConfig {
        branch: BranchConfig {
            seeding: Seeding::OneBranch,
            backtracking: Backtracking::None,
            max_path_tokens: sampler.max_tokens,
            ..BranchConfig::default()
        },
        aggregation: AggregationConfig {
            strategy: Strategy::Maxpath,
            ..AggregationConfig::default()
        },
        ..GcotConfig::default()
    };
    let g = gcot_decode(&q, &cfg, lm, &HashEmbedder::default(), rng_seed)?;
    Ok([
        lm.render(&greedy.tokens),
        lm.render(&beam.tokens),
        lm.render(&topk.tokens),
        g.selected().reasoning.clone(),
    ])
}

/// Greedy ≡ beam(1) ≡ top-k(1) ≡ one-branch GCoT on random scripts.
pub fn reduction_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = SuiteReport::new("reduction-lattice");
    for i in 0..cases {
        let depth = rng.random_range(1..=5);
        let script = random_script(&mut rng, depth);
        let outcome = script
            .build()
            .and_then(|lm| reduction_texts(&lm, seed.wrapping_add(i as u64)));
        let ok = match &outcome {
            Ok(t) => t.iter().all(|x| *x == t[0]),
            Err(_) => false,
        };
        rep.check(ok, || {
            format!("script:\n{}\n-> {outcome:?}", script.to_script())
        });
    }
    rep
}

/// Every suite at its acceptance size.
pub fn all_suites(seed: u64) -> Vec<SuiteReport> {
    vec![
        backtrack_suite(seed, 1000),
        lcs_length_suite(seed, 20_000),
        lcs_tie_suite(seed, 100),
        cluster_suite(seed, 1000),
        scaling_suite(seed, 200),
        reduction_suite(seed, 50),
        bleu_suite(seed, 200),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_backtrack_examples() {
        assert_eq!(brute_backtrack_point(&[0.9, 0.5, 0.1, 0.4], 0.2), Some(3));
        assert_eq!(brute_backtrack_point(&[0.9, 0.8, 0.05], 0.2), Some(3));
        assert_eq!(brute_backtrack_point(&[0.1], 0.2), None);
    }

    #[test]
    fn brute_lcs_examples() {
        assert_eq!(brute_lcs_len(b"abcbdab", b"bdcaba"), 4);
        assert_eq!(brute_lcs_len::<u8>(b"", b"abc"), 0);
        assert_eq!(brute_rightmost_terminal(b"ab", b"ba"), Some((1, 0)));
        assert_eq!(brute_terminal_count(b"ab", b"ba"), 2);
    }

    #[test]
    fn canonical_strings_count() {
        // sum of Stirling numbers S(4, j) for j <= 4 is the Bell number 15
        assert_eq!(canonical_strings(4, 4).len(), 15);
        assert_eq!(canonical_strings(0, 4).len(), 1);
    }

    #[test]
    fn brute_bleu_matches_hand_values() {
        let refs = vec!["the cat sat".to_string()];
        assert_eq!(brute_bleu("the cat sat", &refs), 1.0);
        assert!((brute_bleu("the cat", &refs) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn random_scripts_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = random_script(&mut rng, 4);
            assert!(s.build().is_ok());
        }
    }

    #[test]
    fn small_suites_pass() {
        for r in [
            backtrack_suite(9, 200),
            lcs_tie_suite(9, 10),
            cluster_suite(9, 100),
            scaling_suite(9, 20),
            reduction_suite(9, 5),
            bleu_suite(9, 50),
        ] {
            assert!(r.passed(), "{r:?}");
        }
    }
}
