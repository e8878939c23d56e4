use std::path::{Path, PathBuf};

use gcot_core::explore::Backtracking;
use gcot_core::harness::run::{read_records, RECORDS_FILE, SUMMARY_FILE, TIMINGS_FILE};
use gcot_core::harness::{run_benchmark, Method, RunConfig};

fn testdata(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("testdata")
        .join(name)
}

fn toy_config(out: &Path, methods: &[Method]) -> RunConfig {
    RunConfig {
        methods: methods.to_vec(),
        datasets: vec![testdata("toy.jsonl")],
        backend: format!("toy:{}", testdata("toy_suite.txt").display()),
        out: out.to_path_buf(),
        seed: 11,
        ..RunConfig::default()
    }
}

#[test]
fn toy_suite_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_benchmark(&toy_config(dir.path(), &[Method::Greedy, Method::Gcot])).unwrap();
    assert_eq!(s.records, 30);
    assert_eq!(s.failures, 0);
    let greedy = s.row(Method::Greedy, "accuracy").unwrap();
    let gcot = s.row(Method::Gcot, "accuracy").unwrap();
    assert!((greedy.mean - 0.4).abs() < 1e-12, "{greedy:?}");
    assert!((gcot.mean - 0.8).abs() < 1e-12, "{gcot:?}");
    assert_eq!(gcot.per_seed.len(), 3);
    assert!(greedy.trigger_rate.is_none());
    assert!(gcot.trigger_rate.is_some());
    for f in [RECORDS_FILE, SUMMARY_FILE, TIMINGS_FILE] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn summary_mean_matches_records() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_benchmark(&toy_config(dir.path(), &Method::ALL)).unwrap();
    let records = read_records(&s.records_path).unwrap();
    assert_eq!(records.len(), s.records);
    for row in &s.rows {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.method == row.method && r.error.is_none())
            .filter_map(|r| r.metrics.get(&row.metric).copied())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - row.mean).abs() < 1e-12, "{row:?}");
        let seed_mean = row.per_seed.iter().sum::<f64>() / row.per_seed.len() as f64;
        assert!((seed_mean - row.mean).abs() < 1e-12, "{row:?}");
    }
}

#[test]
fn greedy_ignores_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut answers = Vec::new();
    for seed in [1, 2, 3] {
        let mut cfg = toy_config(&dir.path().join(seed.to_string()), &[Method::Greedy]);
        cfg.seed = seed;
        cfg.runs = 1;
        let s = run_benchmark(&cfg).unwrap();
        let recs = read_records(&s.records_path).unwrap();
        answers.push(recs.into_iter().map(|r| r.response).collect::<Vec<_>>());
    }
    assert_eq!(answers[0], answers[1]);
    assert_eq!(answers[1], answers[2]);
}

#[test]
fn valley_suite_reports_repairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        datasets: vec![testdata("valley_suite.jsonl")],
        backend: format!("toy:{}", testdata("valley_suite.txt").display()),
        out: dir.path().to_path_buf(),
        runs: 1,
        ..RunConfig::default()
    };
    let s = run_benchmark(&cfg).unwrap();
    let row = s.row(Method::Gcot, "match").unwrap();
    assert_eq!(row.trigger_rate, Some(0.3));
    assert_eq!(row.success_given_trigger, Some(1.0));
    assert_eq!(row.mean, 1.0);

    let mut plain = cfg.clone();
    plain.branch.backtracking = Backtracking::None;
    plain.out = dir.path().join("plain");
    let s = run_benchmark(&plain).unwrap();
    let row = s.row(Method::Gcot, "match").unwrap();
    assert_eq!(row.trigger_rate, Some(0.0));
    assert!((row.mean - 0.7).abs() < 1e-12, "{row:?}");
}

#[test]
fn summary_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(dir.path(), &[Method::Gcot]);
    cfg.runs = 2;
    let s = run_benchmark(&cfg).unwrap();
    let text = std::fs::read_to_string(&s.summary_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,dataset,metric,mean,per_seed,trigger_rate,success_given_trigger"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("gcot,toy,accuracy,"), "{row}");
    assert_eq!(row.split(',').nth(4).unwrap().split(';').count(), 2);
}

#[test]
fn missing_script_context_is_a_recorded_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("extra.jsonl");
    std::fs::write(
        &data,
        "{\"id\": \"x\", \"question\": \"Q: unknown ? A:\", \"answers\": [\"1\"], \"task\": \"fixed-numeric\"}\n",
    )
    .unwrap();
    let mut cfg = toy_config(&dir.path().join("out"), &[Method::Greedy]);
    cfg.datasets = vec![data];
    cfg.runs = 1;
    let s = run_benchmark(&cfg).unwrap();
    assert_eq!(s.failures, 1);
    assert!(s.too_many_failures());
    let recs = read_records(&s.records_path).unwrap();
    assert!(recs[0].error.is_some());
}
