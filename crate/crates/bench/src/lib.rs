//! Fixtures shared by the criterion benchmarks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gcot_core::lm::{ScriptBuilder, ToyLm};
use gcot_core::scoring::DEFAULT_TEMPLATE;

const WORDS: [&str; 12] = [
    "the", "sum", "of", "three", "and", "four", "is", "seven", "so", "we", "add", ".",
];

/// Random word list of length `n`.
pub fn tokens(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| WORDS.choose(&mut rng).unwrap().to_string())
        .collect()
}

/// `n` short answers drawn from a small pool so that clusters form.
pub fn answers(n: usize, seed: u64) -> (Vec<String>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = [
        "7",
        "seven",
        "the answer is 7",
        "8",
        "eight",
        "12",
        "twelve apples",
    ];
    let texts = (0..n)
        .map(|_| pool.choose(&mut rng).unwrap().to_string())
        .collect();
    let confs = (0..n).map(|_| rng.random::<f64>()).collect();
    (texts, confs)
}

/// Script with `width` first-step candidates, each continuing greedily for
/// `depth` tokens. Every path dips below the threshold at position 3, so
/// exploration re-branches once per path at position 2, where the
/// alternative continues without a dip.
pub fn branching_script(width: usize, depth: usize) -> ToyLm {
    let mut s = ScriptBuilder::new();
    let firsts: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    let total: f64 = (1..=width).map(|r| 1.0 / r as f64).sum::<f64>() * 1.05;
    let list: Vec<(&str, f64)> = firsts
        .iter()
        .enumerate()
        .map(|(r, t)| (t.as_str(), 1.0 / (r + 1) as f64 / total))
        .collect();
    s.entry("q", &list);
    for f in &firsts {
        let ctx = format!("q {f}");
        s.entry(&ctx, &[("w", 0.9), ("v", 0.05)]);
        s.entry(&format!("{ctx} w"), &[("x", 0.15), ("y", 0.14)]);
        plain(&mut s, format!("{ctx} w x"), depth.saturating_sub(3));
        plain(&mut s, format!("{ctx} v"), depth.saturating_sub(2));
    }
    s.build().expect("valid script")
}

fn plain(s: &mut ScriptBuilder, mut ctx: String, len: usize) {
    for _ in 0..len {
        s.entry(&ctx, &[("w", 0.9), ("v", 0.05)]);
        ctx.push_str(" w");
    }
    s.entry(&ctx, &[("<eos>", 1.0)]);
    let t = format!("{ctx} {DEFAULT_TEMPLATE}");
    s.entry(&t, &[("7", 0.6), ("8", 0.3)]);
    s.entry(&format!("{t} 7"), &[("<eos>", 1.0)]);
}
