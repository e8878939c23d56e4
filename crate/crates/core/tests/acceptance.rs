//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gcot_core::aggregate::{AggregationConfig, HashEmbedder};
use gcot_core::baselines::{greedy_decode, SamplerConfig};
use gcot_core::explore::{fibonacci_indices, Backtracking, BranchConfig, Seeding};
use gcot_core::gcot::{gcot_decode, score_paths, GcotConfig};
use gcot_core::harness::metrics::bleu;
use gcot_core::harness::{run_benchmark, Method, RunConfig};
use gcot_core::lm::{DecodedPath, LmBackend, ScriptBuilder, ToyLm};
use gcot_core::oracle;
use gcot_core::scoring::DEFAULT_TEMPLATE;

const SEED: u64 = 20_240_901;

type Check = Result<(), String>;
type Criterion = (&'static str, Box<dyn Fn() -> Check>);

fn testdata(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("testdata")
        .join(name)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn suite(report: oracle::SuiteReport) -> Check {
    ensure(report.passed(), || format!("{report:?}"))
}

fn defaults() -> Check {
    let c = RunConfig::default();
    let got = (
        c.branch.k,
        c.branch.k_prime,
        c.branch.delta,
        c.aggregation.tau,
        c.sampler.temperature,
        c.sampler.top_k,
        c.sampler.beam_width,
        c.sampler.sc_samples,
        c.runs,
    );
    ensure(got == (10, 2, 0.2, 0.8, 0.7, 10, 10, 10, 3), || {
        format!("{got:?}")
    })
}

fn fibonacci() -> Check {
    ensure(
        fibonacci_indices(10) == [1, 2, 3, 5, 8, 13, 21, 34, 55, 89],
        || format!("{:?}", fibonacci_indices(10)),
    )?;
    for k in 0..=30 {
        let f = fibonacci_indices(k);
        ensure(f.len() == k, || format!("K={k}: {} entries", f.len()))?;
        for i in 0..k {
            let want = match i {
                0 => 1,
                1 => 2,
                _ => f[i - 1] + f[i - 2],
            };
            ensure(f[i] == want, || {
                format!("K={k}: F_{} = {} != {want}", i + 1, f[i])
            })?;
        }
    }
    Ok(())
}

fn lcs() -> Check {
    suite(oracle::lcs_length_suite(SEED, 20_000))?;
    suite(oracle::lcs_tie_suite(SEED, 100))
}

fn answer_of(lm: &ToyLm, path: &DecodedPath) -> String {
    lm.render(&path.tokens)
}

fn rank8() -> Check {
    let lm = ToyLm::load(testdata("rank8.txt")).map_err(|e| e.to_string())?;
    let q = lm
        .encode("Q: A machine makes 3 toys per hour . How many toys after 8 hours ? A:")
        .map_err(|e| e.to_string())?;
    let run = |seeding| {
        let cfg = GcotConfig {
            branch: BranchConfig {
                k: 5,
                seeding,
                ..BranchConfig::default()
            },
            ..GcotConfig::default()
        };
        gcot_decode(&q, &cfg, &lm, &HashEmbedder::default(), SEED)
            .map(|o| o.answer().to_string())
            .map_err(|e| e.to_string())
    };
    let fib = run(Seeding::Fibonacci)?;
    let seq = run(Seeding::Sequential)?;
    let greedy = greedy_decode(&q, &lm, 256).map_err(|e| e.to_string())?;
    let greedy = answer_of(&lm, &greedy);
    ensure(fib == "24", || format!("fibonacci selected {fib:?}"))?;
    ensure(seq != "24", || format!("sequential selected {seq:?}"))?;
    ensure(!greedy.contains("24"), || format!("greedy gave {greedy:?}"))
}

fn valley() -> Check {
    let lm = ToyLm::load(testdata("valley_suite.txt")).map_err(|e| e.to_string())?;
    let q = lm
        .encode("Q: Which position does player0 play ? A:")
        .map_err(|e| e.to_string())?;
    let run = |backtracking| {
        let cfg = GcotConfig {
            branch: BranchConfig {
                backtracking,
                ..BranchConfig::default()
            },
            ..GcotConfig::default()
        };
        gcot_decode(&q, &cfg, &lm, &HashEmbedder::default(), SEED).map_err(|e| e.to_string())
    };
    let repaired = run(Backtracking::LocalMinima)?;
    let plain = run(Backtracking::None)?;
    ensure(repaired.trigger_count > 0, || {
        "no backtracking triggered".into()
    })?;
    let valley_at = repaired
        .paths
        .iter()
        .filter_map(|p| p.path.backtrack_at)
        .min();
    ensure(valley_at == Some(3), || {
        format!("backtrack point {valley_at:?}")
    })?;
    ensure(repaired.answer().contains("defensive end"), || {
        format!("repaired answer {:?}", repaired.answer())
    })?;
    ensure(plain.answer().contains("linebacker"), || {
        format!("no-backtracking answer {:?}", plain.answer())
    })?;

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        datasets: vec![testdata("valley_suite.jsonl")],
        backend: format!("toy:{}", testdata("valley_suite.txt").display()),
        runs: 1,
        seed: SEED,
        out: out.path().to_path_buf(),
        ..RunConfig::default()
    };
    let summary = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let rate = summary.rows.first().and_then(|r| r.trigger_rate);
    ensure(rate == Some(0.3), || format!("trigger rate {rate:?}"))
}

/// Two paths with reasoning lengths 9 and 99 and scripted answer gaps.
fn length_factor_arithmetic() -> Check {
    let mut s = ScriptBuilder::new();
    s.entry("Q", &[("a", 0.6), ("b", 0.4)]);
    let mut short = "Q a".to_string();
    for i in 1..9 {
        s.entry(&short, &[(&format!("s{i}"), 0.9)]);
        short = format!("{short} s{i}");
    }
    s.entry(&short, &[("<eos>", 1.0)]);
    let mut long = "Q b".to_string();
    for i in 1..99 {
        s.entry(&long, &[(&format!("l{i}"), 0.9)]);
        long = format!("{long} l{i}");
    }
    s.entry(&long, &[("<eos>", 1.0)]);
    // gaps 0.5 and 0.3 on the short path, 0.2 and 0.6 on the long one
    let st = format!("{short} {DEFAULT_TEMPLATE}");
    s.entry(&st, &[("x", 0.7), ("y", 0.2)]);
    s.entry(&format!("{st} x"), &[("z", 0.6), ("w", 0.3)]);
    s.entry(&format!("{st} x z"), &[("<eos>", 1.0)]);
    let lt = format!("{long} {DEFAULT_TEMPLATE}");
    s.entry(&lt, &[("u", 0.5), ("v", 0.3)]);
    s.entry(&format!("{lt} u"), &[("r", 0.8), ("p", 0.2)]);
    s.entry(&format!("{lt} u r"), &[("<eos>", 1.0)]);
    let lm = s.build().map_err(|e| e.to_string())?;
    let q = lm.encode("Q").map_err(|e| e.to_string())?;
    let cfg = GcotConfig {
        branch: BranchConfig {
            k: 2,
            backtracking: Backtracking::None,
            ..BranchConfig::default()
        },
        ..GcotConfig::default()
    };
    let out =
        gcot_decode(&q, &cfg, &lm, &HashEmbedder::default(), SEED).map_err(|e| e.to_string())?;
    let by_len = |n: usize| {
        out.paths
            .iter()
            .find(|p| p.path.len() == n)
            .map(|p| p.score.value)
            .ok_or_else(|| format!("no path of length {n}"))
    };
    let short_mean = (0.5 + 0.3) / 2.0;
    let long_mean = (0.2 + 0.6) / 2.0;
    let (d9, d99) = (by_len(9)?, by_len(99)?);
    ensure((d9 - 0.5 * short_mean).abs() < 1e-12, || {
        format!("len 9: {d9}")
    })?;
    ensure((d99 - long_mean).abs() < 1e-12, || format!("len 99: {d99}"))?;
    // scoring the same paths directly gives the same numbers
    let again = score_paths(
        &q,
        out.paths.iter().map(|p| p.path.clone()).collect(),
        &cfg,
        &lm,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        again
            .iter()
            .zip(&out.paths)
            .all(|(a, b)| a.score == b.score),
        || "rescoring changed values".into(),
    )
}

fn replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bench = |name: &str| -> Result<Vec<u8>, String> {
        let cfg = RunConfig {
            methods: Method::ALL.to_vec(),
            datasets: vec![testdata("toy.jsonl")],
            backend: format!("toy:{}", testdata("toy_suite.txt").display()),
            seed: SEED,
            out: dir.path().join(name),
            cache: Some(dir.path().join("cache.jsonl")),
            aggregation: AggregationConfig::default(),
            sampler: SamplerConfig::default(),
            ..RunConfig::default()
        };
        let s = run_benchmark(&cfg).map_err(|e| e.to_string())?;
        std::fs::read(&s.records_path).map_err(|e| e.to_string())
    };
    let a = bench("a")?;
    let b = bench("b")?;
    ensure(!a.is_empty(), || "empty records file".into())?;
    ensure(a == b, || "record files differ".into())
}

fn bleu_check() -> Check {
    suite(oracle::bleu_suite(SEED, 200))?;
    let id = bleu("the quick brown fox jumps", &["the quick brown fox jumps"]);
    ensure(id == 1.0, || format!("identity {id}"))?;
    let empty = bleu("", &["the quick brown fox"]);
    ensure(empty == 0.0, || format!("empty {empty}"))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("defaults", Box::new(defaults)),
        ("fibonacci ranks", Box::new(fibonacci)),
        (
            "backtrack oracle",
            Box::new(|| suite(oracle::backtrack_suite(SEED, 1000))),
        ),
        ("lcs oracle", Box::new(lcs)),
        (
            "clustering oracle",
            Box::new(|| suite(oracle::cluster_suite(SEED, 1000))),
        ),
        (
            "reduction lattice",
            Box::new(|| suite(oracle::reduction_suite(SEED, 50))),
        ),
        ("rank-8 recovery", Box::new(rank8)),
        ("valley repair", Box::new(valley)),
        (
            "length-factor arithmetic",
            Box::new(length_factor_arithmetic),
        ),
        (
            "scaling invariance",
            Box::new(|| suite(oracle::scaling_suite(SEED, 200))),
        ),
        ("deterministic replay", Box::new(replay)),
        ("bleu cross-check", Box::new(bleu_check)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let res = check();
        let ms = t0.elapsed().as_millis();
        match res {
            Ok(()) => println!("PASS criterion {}: {name} ({ms} ms)", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({ms} ms): {e}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
