//! Two-stage path exploration.
//!
//! Stage one seeds `K` paths from first-step candidates at Fibonacci ranks
//! and completes each greedily. Stage two scans each path's token
//! confidences for the earliest strict local minimum below `delta` (from
//! position 3 on), steps back one token before it, and re-branches there on
//! `K'` alternatives. Re-branched children replace the original path.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{branch_and_complete, DecodedPath, LmBackend, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Seeding {
    #[default]
    Fibonacci,
    Sequential,
    OneBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backtracking {
    #[default]
    LocalMinima,
    Random,
    Late,
    None,
}

/// What to do with a requested rank beyond the visible candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankOverflow {
    /// Drop the seed.
    #[default]
    Skip,
    /// Use the last visible rank instead (deduplicated).
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BranchConfig {
    /// First-stage branch count.
    pub k: usize,
    /// Second-stage branch count.
    pub k_prime: usize,
    /// Confidence threshold for backtracking.
    pub delta: f64,
    pub seeding: Seeding,
    pub backtracking: Backtracking,
    pub max_backtracks_per_path: usize,
    pub rank_overflow: RankOverflow,
    /// Keep the original path next to its re-branched children.
    pub keep_original: bool,
    /// Maximum tokens per decoded path.
    pub max_path_tokens: usize,
}

impl Default for BranchConfig {
    fn default() -> Self {
        Self {
            k: 10,
            k_prime: 2,
            delta: 0.2,
            seeding: Seeding::Fibonacci,
            backtracking: Backtracking::LocalMinima,
            max_backtracks_per_path: 1,
            rank_overflow: RankOverflow::Skip,
            keep_original: false,
            max_path_tokens: 256,
        }
    }
}

impl BranchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} not in (0, 1)", self.delta)));
        }
        if self.max_path_tokens == 0 {
            return Err(Error::Config("max_path_tokens must be at least 1".into()));
        }
        Ok(())
    }

    /// First-step ranks requested by the seeding schedule.
    pub fn seed_ranks(&self) -> Vec<usize> {
        match self.seeding {
            Seeding::Fibonacci => fibonacci_indices(self.k),
            Seeding::Sequential => (1..=self.k).collect(),
            Seeding::OneBranch => vec![1],
        }
    }
}

/// `[F_1, .., F_k]` with `F_1 = 1`, `F_2 = 2`, `F_n = F_{n-1} + F_{n-2}`.
pub fn fibonacci_indices(k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let (mut a, mut b) = (1usize, 2usize);
    for _ in 0..k {
        out.push(a);
        (a, b) = (b, a.saturating_add(b));
    }
    out
}

/// Maps requested ranks onto a list of `available` candidates.
pub fn resolve_ranks(ranks: &[usize], available: usize, policy: RankOverflow) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(ranks.len());
    for &r in ranks {
        let r = match policy {
            RankOverflow::Skip if r > available => continue,
            RankOverflow::Skip => r,
            RankOverflow::Clamp => r.min(available),
        };
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// All 1-indexed positions `t >= 3` where `s_t` is a strict local minimum
/// below `delta`. At the final position only the left neighbour is compared.
pub fn local_minima(conf: &[f64], delta: f64) -> Vec<usize> {
    let n = conf.len();
    (3..=n)
        .filter(|&t| {
            let s = conf[t - 1];
            s < conf[t - 2] && (t == n || s < conf[t]) && s < delta
        })
        .collect()
}

/// Earliest qualifying local minimum, or `None` when there is none.
pub fn find_backtrack_point(conf: &[f64], delta: f64) -> Option<usize> {
    local_minima(conf, delta).first().copied()
}

/// Picks the backtracking position for one path under `variant`.
pub fn pick_backtrack_point<R: Rng>(
    conf: &[f64],
    delta: f64,
    variant: Backtracking,
    rng: &mut R,
) -> Option<usize> {
    let n = conf.len();
    match variant {
        Backtracking::None => None,
        Backtracking::LocalMinima => find_backtrack_point(conf, delta),
        Backtracking::Random => (n >= 3).then(|| rng.random_range(3..=n)),
        Backtracking::Late => local_minima(conf, delta)
            .last()
            .copied()
            .or((n >= 3).then_some(n)),
    }
}

/// Seeds paths from first-step candidates and completes each greedily.
///
/// Seeds whose rollout fails are dropped with a warning; if every seed
/// fails the result is [`Error::EmptyExploration`].
pub fn seed_paths(
    question: &[Token],
    cfg: &BranchConfig,
    backend: &dyn LmBackend,
) -> Result<Vec<DecodedPath>> {
    cfg.validate()?;
    let dist = backend.next_distribution(question)?;
    let ranks = resolve_ranks(&cfg.seed_ranks(), dist.len(), cfg.rank_overflow);
    if ranks.is_empty() {
        return Err(Error::EmptyExploration("no seed rank is visible".into()));
    }
    let empty = DecodedPath::default();
    let results: Vec<Result<DecodedPath>> = ranks
        .par_iter()
        .map(|&rank| {
            let mut p =
                branch_and_complete(backend, question, &empty, &dist, rank, cfg.max_path_tokens)?;
            p.seed_rank = Some(rank);
            Ok(p)
        })
        .collect();
    let mut paths = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(p) => paths.push(p),
            Err(e) => {
                log::warn!("seed rollout failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if paths.is_empty() {
        let msg = first_err.map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::EmptyExploration(msg));
    }
    Ok(paths)
}

/// Re-branches `path` one token before the 1-indexed backtrack point `b`.
///
/// The prefix `y_1..y_{b-2}` is kept, position `b - 1` is replaced by the
/// candidates at Fibonacci ranks `F_1..F_{K'}`, and each prefix is completed
/// greedily. Children token-identical to `path` or to an earlier child are
/// dropped.
pub fn rebranch(
    question: &[Token],
    path: &DecodedPath,
    b: usize,
    cfg: &BranchConfig,
    backend: &dyn LmBackend,
) -> Result<Vec<DecodedPath>> {
    if cfg.k_prime == 0 {
        return Ok(Vec::new());
    }
    if b < 3 || b > path.len() {
        return Err(Error::Config(format!(
            "backtrack point {b} outside [3, {}]",
            path.len()
        )));
    }
    let mut head = path.clone();
    head.truncate(b - 2);
    let mut ctx = question.to_vec();
    ctx.extend(head.tokens.iter().cloned());
    let dist = backend.next_distribution(&ctx)?;
    let ranks = resolve_ranks(
        &fibonacci_indices(cfg.k_prime),
        dist.len(),
        cfg.rank_overflow,
    );
    let children: Vec<DecodedPath> = ranks
        .par_iter()
        .map(|&rank| {
            let mut c =
                branch_and_complete(backend, question, &head, &dist, rank, cfg.max_path_tokens)?;
            c.seed_rank = path.seed_rank;
            c.backtrack_at = Some(b);
            c.rebranch_rank = Some(rank);
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<DecodedPath> = Vec::with_capacity(children.len());
    for c in children {
        if c.same_tokens(path) || out.iter().any(|o| o.same_tokens(&c)) {
            continue;
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplorationResult {
    pub paths: Vec<DecodedPath>,
    /// Number of paths that were replaced by re-branched children.
    pub trigger_count: usize,
}

impl ExplorationResult {
    pub fn replaced_original(&self, i: usize) -> bool {
        self.paths[i].backtrack_at.is_some()
    }
}

#[allow(clippy::too_many_arguments)]
fn expand<R: Rng>(
    question: &[Token],
    path: DecodedPath,
    budget: usize,
    cfg: &BranchConfig,
    backend: &dyn LmBackend,
    rng: &mut R,
    triggers: &mut usize,
    out: &mut Vec<DecodedPath>,
) {
    if budget == 0 {
        out.push(path);
        return;
    }
    let Some(b) = pick_backtrack_point(&path.chosen_probs, cfg.delta, cfg.backtracking, rng) else {
        out.push(path);
        return;
    };
    let children = match rebranch(question, &path, b, cfg, backend) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("re-branch at position {b} failed: {e}");
            Vec::new()
        }
    };
    if children.is_empty() {
        out.push(path);
        return;
    }
    *triggers += 1;
    if cfg.keep_original {
        out.push(path);
    }
    for c in children {
        expand(question, c, budget - 1, cfg, backend, rng, triggers, out);
    }
}

/// Runs seeding followed by the configured backtracking variant.
///
/// `rng_seed` drives the random backtracking variant; each seed path draws
/// from its own stream so results do not depend on scheduling.
pub fn explore(
    question: &[Token],
    cfg: &BranchConfig,
    backend: &dyn LmBackend,
    rng_seed: u64,
) -> Result<ExplorationResult> {
    let seeds = seed_paths(question, cfg, backend)?;
    let budget = match cfg.backtracking {
        Backtracking::None => 0,
        _ => cfg.max_backtracks_per_path,
    };
    let per_seed: Vec<(Vec<DecodedPath>, usize)> = seeds
        .into_par_iter()
        .enumerate()
        .map(|(i, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(i as u64);
            let mut out = Vec::new();
            let mut triggers = 0;
            expand(
                question,
                seed,
                budget,
                cfg,
                backend,
                &mut rng,
                &mut triggers,
                &mut out,
            );
            (out, triggers)
        })
        .collect();
    let mut result = ExplorationResult::default();
    for (paths, triggers) in per_seed {
        result.trigger_count += triggers;
        for p in paths {
            if !result.paths.iter().any(|q| q.same_tokens(&p)) {
                result.paths.push(p);
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{greedy_rollout, ScriptBuilder, ToyLm};

    #[test]
    fn fibonacci_examples() {
        assert_eq!(fibonacci_indices(5), vec![1, 2, 3, 5, 8]);
        assert_eq!(fibonacci_indices(1), vec![1]);
        assert_eq!(
            fibonacci_indices(10),
            vec![1, 2, 3, 5, 8, 13, 21, 34, 55, 89]
        );
        assert!(fibonacci_indices(0).is_empty());
    }

    #[test]
    fn backtrack_point_examples() {
        assert_eq!(
            find_backtrack_point(&[0.9, 0.5, 0.1, 0.4, 0.6], 0.2),
            Some(3)
        );
        assert_eq!(find_backtrack_point(&[0.1, 0.2, 0.3, 0.4], 0.2), None);
        assert_eq!(find_backtrack_point(&[0.9, 0.8, 0.05], 0.2), Some(3));
        // positions 1 and 2 never qualify
        assert_eq!(find_backtrack_point(&[0.5, 0.01, 0.5], 0.2), None);
        // ties do not trigger
        assert_eq!(find_backtrack_point(&[0.9, 0.1, 0.1, 0.5], 0.2), None);
        assert_eq!(find_backtrack_point(&[0.9, 0.5, 0.1, 0.1], 0.2), None);
        // threshold is strict
        assert_eq!(find_backtrack_point(&[0.9, 0.5, 0.2, 0.4], 0.2), None);
        assert_eq!(find_backtrack_point(&[], 0.2), None);
    }

    #[test]
    fn late_and_random_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = [0.9, 0.5, 0.1, 0.4, 0.05, 0.6];
        assert_eq!(
            pick_backtrack_point(&s, 0.2, Backtracking::Late, &mut rng),
            Some(5)
        );
        let flat = [0.9, 0.9, 0.9, 0.9];
        assert_eq!(
            pick_backtrack_point(&flat, 0.2, Backtracking::Late, &mut rng),
            Some(4)
        );
        for _ in 0..100 {
            let b = pick_backtrack_point(&flat, 0.2, Backtracking::Random, &mut rng).unwrap();
            assert!((3..=4).contains(&b));
        }
        assert_eq!(
            pick_backtrack_point(&[0.1, 0.1], 0.2, Backtracking::Random, &mut rng),
            None
        );
        assert_eq!(
            pick_backtrack_point(&s, 0.2, Backtracking::None, &mut rng),
            None
        );
    }

    #[test]
    fn overflow_policies() {
        let fib = fibonacci_indices(10);
        assert_eq!(
            resolve_ranks(&fib, 20, RankOverflow::Skip),
            vec![1, 2, 3, 5, 8, 13]
        );
        assert_eq!(
            resolve_ranks(&fib, 4, RankOverflow::Clamp),
            vec![1, 2, 3, 4]
        );
    }

    /// Q -> first step {a,b,c,d}; every branch is a short scripted chain.
    fn fan_script() -> ToyLm {
        let mut s = ScriptBuilder::new();
        s.entry("Q", &[("a", 0.4), ("b", 0.3), ("c", 0.2), ("d", 0.1)]);
        for t in ["a", "b", "c", "d"] {
            s.entry(&format!("Q {t}"), &[("x", 0.9), ("y", 0.1)]);
            s.entry(&format!("Q {t} x"), &[("<eos>", 0.9), ("y", 0.1)]);
        }
        s.build().unwrap()
    }

    #[test]
    fn seeds_follow_schedule() {
        let lm = fan_script();
        let q = lm.encode("Q").unwrap();
        let cfg = BranchConfig {
            k: 3,
            ..Default::default()
        };
        let paths = seed_paths(&q, &cfg, &lm).unwrap();
        let firsts: Vec<&str> = paths.iter().map(|p| p.tokens[0].text.as_str()).collect();
        assert_eq!(firsts, vec!["a", "b", "c"]);
        assert_eq!(
            paths
                .iter()
                .map(|p| p.seed_rank.unwrap())
                .collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        // rank 5 is not visible: skipped
        let cfg = BranchConfig {
            k: 4,
            ..Default::default()
        };
        assert_eq!(seed_paths(&q, &cfg, &lm).unwrap().len(), 3);
        let cfg = BranchConfig {
            k: 4,
            rank_overflow: RankOverflow::Clamp,
            ..Default::default()
        };
        let ranks: Vec<usize> = seed_paths(&q, &cfg, &lm)
            .unwrap()
            .iter()
            .map(|p| p.seed_rank.unwrap())
            .collect();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
    }

    #[test]
    fn one_branch_is_greedy() {
        let lm = fan_script();
        let q = lm.encode("Q").unwrap();
        let cfg = BranchConfig {
            seeding: Seeding::OneBranch,
            backtracking: Backtracking::None,
            ..Default::default()
        };
        let res = explore(&q, &cfg, &lm, 0).unwrap();
        let greedy = greedy_rollout(&lm, &q, cfg.max_path_tokens).unwrap();
        assert_eq!(res.paths.len(), 1);
        assert!(res.paths[0].same_tokens(&greedy));
        assert_eq!(res.paths[0].chosen_probs, greedy.chosen_probs);
    }

    #[test]
    fn all_seeds_failing_is_explicit() {
        let lm = ToyLm::from_script("Q\ta:0.5,b:0.5\n").unwrap();
        let q = lm.encode("Q").unwrap();
        let err = seed_paths(&q, &BranchConfig::default(), &lm).unwrap_err();
        assert!(matches!(err, Error::EmptyExploration(_)));
    }

    /// Greedy path Q a b c d with confidences [0.9, 0.5, 0.1, 0.4]; the
    /// alternative at position 2 (rank 2, "e") leads to a clean path.
    fn valley_script() -> ToyLm {
        let mut s = ScriptBuilder::new();
        s.entry("Q", &[("a", 0.9), ("z", 0.1)]);
        s.entry("Q a", &[("b", 0.5), ("e", 0.4), ("z", 0.1)]);
        s.entry(
            "Q a b",
            &[
                ("c", 0.1),
                ("c2", 0.1),
                ("c3", 0.1),
                ("c4", 0.1),
                ("c5", 0.1),
            ],
        );
        s.entry("Q a b c", &[("d", 0.4), ("z", 0.3)]);
        s.entry("Q a b c d", &[("<eos>", 0.9)]);
        s.entry("Q a e", &[("f", 0.8), ("z", 0.2)]);
        s.entry("Q a e f", &[("g", 0.7), ("z", 0.2)]);
        s.entry("Q a e f g", &[("<eos>", 0.9)]);
        s.build().unwrap()
    }

    #[test]
    fn valley_is_replaced_by_children() {
        let lm = valley_script();
        let q = lm.encode("Q").unwrap();
        let cfg = BranchConfig {
            k: 1,
            ..Default::default()
        };
        let seeds = seed_paths(&q, &cfg, &lm).unwrap();
        assert_eq!(seeds[0].chosen_probs, vec![0.9, 0.5, 0.1, 0.4]);
        let res = explore(&q, &cfg, &lm, 0).unwrap();
        assert_eq!(res.trigger_count, 1);
        assert_eq!(res.paths.len(), 1);
        let texts: Vec<&str> = res.paths[0]
            .tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect();
        assert_eq!(texts, vec!["a", "e", "f", "g"]);
        assert_eq!(res.paths[0].backtrack_at, Some(3));
        assert_eq!(res.paths[0].rebranch_rank, Some(2));
        assert!(res.replaced_original(0));

        let keep = BranchConfig {
            keep_original: true,
            ..cfg.clone()
        };
        assert_eq!(explore(&q, &keep, &lm, 0).unwrap().paths.len(), 2);

        let none = BranchConfig {
            backtracking: Backtracking::None,
            ..cfg
        };
        let res = explore(&q, &none, &lm, 0).unwrap();
        assert_eq!(res.trigger_count, 0);
        assert!(res.paths[0].same_tokens(&seeds[0]));
    }

    #[test]
    fn rebranch_drops_rank_one_duplicate() {
        let lm = valley_script();
        let q = lm.encode("Q").unwrap();
        let cfg = BranchConfig::default();
        let seed = greedy_rollout(&lm, &q, 10).unwrap();
        let kids = rebranch(&q, &seed, 3, &cfg, &lm).unwrap();
        assert_eq!(kids.len(), 1);
        assert_eq!(kids[0].tokens[1].text, "e");
        // prefix keeps y_1 only
        assert_eq!(kids[0].tokens[0].text, "a");
        let k0 = BranchConfig {
            k_prime: 0,
            ..Default::default()
        };
        assert!(rebranch(&q, &seed, 3, &k0, &lm).unwrap().is_empty());
        assert!(rebranch(&q, &seed, 2, &cfg, &lm).is_err());
    }

    #[test]
    fn clean_paths_pass_through() {
        let lm = fan_script();
        let q = lm.encode("Q").unwrap();
        let cfg = BranchConfig {
            k: 3,
            ..Default::default()
        };
        let res = explore(&q, &cfg, &lm, 0).unwrap();
        assert_eq!(res.trigger_count, 0);
        assert_eq!(res.paths.len(), 3);
    }
}
