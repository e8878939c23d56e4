//! Benchmark orchestration over datasets × methods × runs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{build_backend, build_embedder, derive_seed, open_cache, Method, RunConfig};
use super::dataset::{load_dataset, QaExample};
use super::metrics::{bleu, fixed_correct, match_metric};
use crate::aggregate::Embedder;
use crate::baselines::{
    beam_search, cot_decoding, greedy_decode, self_consistency, temperature_sample, topk_sample,
    SamplerConfig,
};
use crate::error::{Error, Result};
use crate::explore::Backtracking;
use crate::extract::TaskKind;
use crate::gcot::{gcot_decode, GcotOutcome};
use crate::lm::{DecodedPath, LmBackend};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.jsonl";

/// Share of failed examples above which a run counts as failed.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtrack_at: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rebranch_rank: Option<usize>,
    pub finished: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
}

impl PathRecord {
    fn from_path(backend: &dyn LmBackend, p: &DecodedPath) -> Self {
        Self {
            text: backend.render(&p.tokens),
            answer: None,
            confidence: None,
            length_factor: None,
            gap_factor: None,
            seed_rank: p.seed_rank,
            backtrack_at: p.backtrack_at,
            rebranch_rank: p.rebranch_rank,
            finished: p.finished,
            cluster: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub representative: String,
    /// Path indices in join order.
    pub members: Vec<usize>,
    pub cumulative: f64,
}

/// Output of one method on one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Extracted answer (fixed tasks) or answer text (free tasks).
    pub answer: Option<String>,
    /// Full text of the selected reasoning path.
    pub response: String,
    pub paths: Vec<PathRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_count: Option<usize>,
}

impl Decoded {
    fn single(backend: &dyn LmBackend, task: TaskKind, p: &DecodedPath) -> Self {
        let response = backend.render(&p.tokens);
        let mut rec = PathRecord::from_path(backend, p);
        let answer = task.extract(&response).map(|e| e.value);
        rec.answer = answer.clone();
        Decoded {
            answer,
            response,
            paths: vec![rec],
            clusters: Vec::new(),
            trigger_count: None,
        }
    }

    fn from_gcot(out: &GcotOutcome, task: TaskKind) -> Self {
        let sel = out.selected();
        let answer = match task {
            TaskKind::Free => Some(out.answer().to_string()).filter(|a| !a.is_empty()),
            _ => task
                .extract(out.answer())
                .or_else(|| task.extract(&sel.reasoning))
                .map(|e| e.value),
        };
        let mut paths: Vec<PathRecord> = out
            .paths
            .iter()
            .map(|sp| PathRecord {
                text: sp.reasoning.clone(),
                answer: Some(sp.answer.clone()),
                confidence: Some(sp.score.value),
                length_factor: sp.score.length_factor,
                gap_factor: sp.score.gap_factor,
                seed_rank: sp.path.seed_rank,
                backtrack_at: sp.path.backtrack_at,
                rebranch_rank: sp.path.rebranch_rank,
                finished: sp.path.finished,
                cluster: None,
            })
            .collect();
        let clusters = out
            .aggregation
            .clusters
            .iter()
            .enumerate()
            .map(|(j, c)| {
                for m in &c.members {
                    paths[m.index].cluster = Some(j);
                }
                ClusterRecord {
                    representative: c.representative.clone(),
                    members: c.members.iter().map(|m| m.index).collect(),
                    cumulative: c.cumulative,
                }
            })
            .collect();
        Decoded {
            answer,
            response: sel.reasoning.clone(),
            paths,
            clusters,
            trigger_count: Some(out.trigger_count),
        }
    }

    /// Text scored by the free-form metrics.
    pub fn eval_text(&self, method: Method) -> &str {
        match method {
            Method::Gcot
            | Method::GcotSpanalign
            | Method::CotDecoding
            | Method::SelfConsistency => self.answer.as_deref().unwrap_or(""),
            _ => &self.response,
        }
    }
}

/// Decodes one prompt with `method`; `seed` drives every random choice.
pub fn decode_question(
    method: Method,
    prompt: &str,
    task: TaskKind,
    cfg: &RunConfig,
    backend: &dyn LmBackend,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<Decoded> {
    let q = backend.encode(prompt)?;
    let sampler = SamplerConfig {
        rng_seed: seed,
        ..cfg.sampler.clone()
    };
    match method {
        Method::Greedy => {
            let p = greedy_decode(&q, backend, sampler.max_tokens)?;
            Ok(Decoded::single(backend, task, &p))
        }
        Method::Temp => Ok(Decoded::single(
            backend,
            task,
            &temperature_sample(&q, &sampler, backend)?,
        )),
        Method::Topk => Ok(Decoded::single(
            backend,
            task,
            &topk_sample(&q, &sampler, backend)?,
        )),
        Method::Beam => Ok(Decoded::single(
            backend,
            task,
            &beam_search(&q, &sampler, backend)?,
        )),
        Method::SelfConsistency => {
            let v = self_consistency(&q, &sampler, task, backend)?;
            let paths = v
                .samples
                .iter()
                .zip(&v.answers)
                .map(|(p, a)| PathRecord {
                    answer: a.clone(),
                    ..PathRecord::from_path(backend, p)
                })
                .collect();
            Ok(Decoded {
                answer: v.answer.clone(),
                response: backend.render(&v.samples[v.selected].tokens),
                paths,
                clusters: Vec::new(),
                trigger_count: None,
            })
        }
        Method::CotDecoding => {
            let out = cot_decoding(
                &q,
                cfg.branch.k,
                sampler.max_tokens,
                &cfg.cot_span(),
                task,
                backend,
            )?;
            let paths = out
                .paths
                .iter()
                .map(|c| PathRecord {
                    answer: c.answer.clone(),
                    confidence: Some(c.confidence),
                    ..PathRecord::from_path(backend, &c.path)
                })
                .collect();
            Ok(Decoded {
                answer: out.answer.clone(),
                response: backend.render(&out.paths[out.selected].path.tokens),
                paths,
                clusters: Vec::new(),
                trigger_count: None,
            })
        }
        Method::Gcot | Method::GcotSpanalign => {
            let out = gcot_decode(&q, &cfg.gcot_config(method), backend, embedder, seed)?;
            Ok(Decoded::from_gcot(&out, task))
        }
    }
}

/// Metric name to value for one prediction.
pub fn evaluate(ex: &QaExample, method: Method, d: &Decoded) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if ex.task_kind.is_fixed() {
        let ok = fixed_correct(ex.task_kind, d.answer.as_deref(), &ex.gold_answers);
        m.insert("accuracy".to_string(), ok as u8 as f64);
    } else {
        let text = d.eval_text(method);
        m.insert(
            "match".to_string(),
            match_metric(text, &ex.gold_answers) as f64,
        );
        m.insert("bleu".to_string(), bleu(text, &ex.gold_answers));
    }
    m
}

/// The metric that decides correctness for a task.
pub fn primary_metric(task: TaskKind) -> &'static str {
    if task.is_fixed() {
        "accuracy"
    } else {
        "match"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dataset: String,
    pub example_id: String,
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    pub config_hash: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub response: String,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub paths: Vec<PathRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_count: Option<usize>,
    /// Answer and correctness with backtracking disabled; set only when
    /// backtracking fired.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn correct(&self) -> Option<bool> {
        self.metrics
            .get(primary_metric(self.task))
            .map(|&v| v == 1.0)
    }

    pub fn triggered(&self) -> bool {
        self.trigger_count.is_some_and(|n| n > 0)
    }
}

#[derive(Debug, Clone, Serialize)]
struct TimingRecord<'a> {
    dataset: &'a str,
    example_id: &'a str,
    method: Method,
    run: usize,
    wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub dataset: String,
    pub metric: String,
    pub mean: f64,
    pub per_seed: Vec<f64>,
    pub trigger_rate: Option<f64>,
    pub success_given_trigger: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    pub records: usize,
    pub failures: usize,
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
    pub timings_path: PathBuf,
}

impl RunSummary {
    pub fn failure_rate(&self) -> f64 {
        if self.records == 0 {
            0.0
        } else {
            self.failures as f64 / self.records as f64
        }
    }

    pub fn too_many_failures(&self) -> bool {
        self.failure_rate() > MAX_FAILURE_RATE
    }

    pub fn row(&self, method: Method, metric: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.metric == metric)
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Decodes and scores one example; failures become records with `error`.
#[allow(clippy::too_many_arguments)]
pub fn run_example(
    ex: &QaExample,
    dataset: &str,
    method: Method,
    run: usize,
    cfg: &RunConfig,
    backend: &dyn LmBackend,
    embedder: &dyn Embedder,
) -> PredictionRecord {
    let run_seed = cfg.run_seed(run);
    let seed = derive_seed(run_seed, &[method.name().as_bytes(), ex.id.as_bytes()]);
    let mut rec = PredictionRecord {
        dataset: dataset.to_string(),
        example_id: ex.id.clone(),
        method,
        run,
        seed: run_seed,
        config_hash: cfg.config_hash(method, run_seed),
        task: ex.task_kind,
        answer: None,
        response: String::new(),
        metrics: BTreeMap::new(),
        paths: Vec::new(),
        clusters: Vec::new(),
        trigger_count: None,
        counterfactual_answer: None,
        counterfactual_correct: None,
        error: None,
    };
    let prompt = ex.prompt(cfg.prompt_prefix.as_deref());
    let decoded = match decode_question(method, &prompt, ex.task_kind, cfg, backend, embedder, seed)
    {
        Ok(d) => d,
        Err(e) => {
            log::warn!("{dataset}/{} ({method}, run {run}): {e}", ex.id);
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.metrics = evaluate(ex, method, &decoded);
    if method.is_gcot() && decoded.trigger_count.is_some_and(|n| n > 0) {
        let mut alt = cfg.clone();
        alt.branch.backtracking = Backtracking::None;
        match decode_question(method, &prompt, ex.task_kind, &alt, backend, embedder, seed) {
            Ok(cf) => {
                let m = evaluate(ex, method, &cf);
                rec.counterfactual_correct = Some(m[primary_metric(ex.task_kind)] == 1.0);
                rec.counterfactual_answer = cf.answer;
            }
            Err(e) => log::warn!("{dataset}/{}: counterfactual failed: {e}", ex.id),
        }
    }
    rec.answer = decoded.answer;
    rec.response = decoded.response;
    rec.paths = decoded.paths;
    rec.clusters = decoded.clusters;
    rec.trigger_count = decoded.trigger_count;
    rec
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Summary rows for the records of one (dataset, method) pair.
pub fn summarize(records: &[PredictionRecord], runs: usize) -> Vec<SummaryRow> {
    let ok: Vec<&PredictionRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let mut metrics: Vec<&str> = ok
        .iter()
        .flat_map(|r| r.metrics.keys().map(String::as_str))
        .collect();
    metrics.sort_unstable();
    metrics.dedup();

    let (trigger_rate, success) = if first.method.is_gcot() && !ok.is_empty() {
        let triggered: Vec<&&PredictionRecord> = ok.iter().filter(|r| r.triggered()).collect();
        let rate = triggered.len() as f64 / ok.len() as f64;
        let fixed = triggered
            .iter()
            .filter(|r| r.correct() == Some(true) && r.counterfactual_correct == Some(false))
            .count();
        let success = (!triggered.is_empty()).then(|| fixed as f64 / triggered.len() as f64);
        (Some(rate), success)
    } else {
        (None, None)
    };

    metrics
        .into_iter()
        .map(|metric| {
            let all: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.metrics.get(metric).copied())
                .collect();
            let per_seed = (0..runs)
                .map(|run| {
                    let v: Vec<f64> = ok
                        .iter()
                        .filter(|r| r.run == run)
                        .filter_map(|r| r.metrics.get(metric).copied())
                        .collect();
                    mean(&v)
                })
                .collect();
            SummaryRow {
                method: first.method,
                dataset: first.dataset.clone(),
                metric: metric.to_string(),
                mean: mean(&all),
                per_seed,
                trigger_rate,
                success_given_trigger: success,
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record([
        "method",
        "dataset",
        "metric",
        "mean",
        "per_seed",
        "trigger_rate",
        "success_given_trigger",
    ])
    .map_err(io)?;
    for r in rows {
        let per_seed = r
            .per_seed
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.method.name(),
            &r.dataset,
            &r.metric,
            &r.mean.to_string(),
            &per_seed,
            &opt(r.trigger_rate),
            &opt(r.success_given_trigger),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every (dataset, method, run) combination and writes records,
/// timings and the summary table under `cfg.out`.
pub fn run_benchmark(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    if cfg.datasets.is_empty() {
        return Err(Error::Config("no dataset given".into()));
    }
    let cache = open_cache(cfg)?;
    let backend = build_backend(cfg, cache.clone())?;
    let embedder = build_embedder(cfg, cache)?;
    let datasets: Vec<(String, Vec<QaExample>)> = cfg
        .datasets
        .iter()
        .map(|p| Ok((dataset_name(p), load_dataset(p)?)))
        .collect::<Result<_>>()?;

    fs::create_dir_all(&cfg.out)?;
    let records_path = cfg.out.join(RECORDS_FILE);
    let summary_path = cfg.out.join(SUMMARY_FILE);
    let timings_path = cfg.out.join(TIMINGS_FILE);
    let mut records_w = BufWriter::new(File::create(&records_path)?);
    let mut timings_w = BufWriter::new(File::create(&timings_path)?);

    let mut rows = Vec::new();
    let (mut total, mut failures) = (0, 0);
    for (name, examples) in &datasets {
        for &method in &cfg.methods {
            let mut group = Vec::with_capacity(examples.len() * cfg.runs);
            for run in 0..cfg.runs {
                let results: Vec<(PredictionRecord, f64)> = examples
                    .par_iter()
                    .map(|ex| {
                        let t0 = Instant::now();
                        let r = run_example(ex, name, method, run, cfg, &*backend, &*embedder);
                        (r, t0.elapsed().as_secs_f64() * 1e3)
                    })
                    .collect();
                for (rec, ms) in results {
                    serde_json::to_writer(&mut records_w, &rec)?;
                    records_w.write_all(b"\n")?;
                    serde_json::to_writer(
                        &mut timings_w,
                        &TimingRecord {
                            dataset: name,
                            example_id: &rec.example_id,
                            method,
                            run,
                            wall_ms: ms,
                        },
                    )?;
                    timings_w.write_all(b"\n")?;
                    total += 1;
                    failures += rec.error.is_some() as usize;
                    group.push(rec);
                }
            }
            rows.extend(summarize(&group, cfg.runs));
        }
    }
    records_w.flush()?;
    timings_w.flush()?;
    write_summary_csv(&summary_path, &rows)?;
    Ok(RunSummary {
        rows,
        records: total,
        failures,
        records_path,
        summary_path,
        timings_path,
    })
}

/// Reads a records file back.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
