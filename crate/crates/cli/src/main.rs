use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gcot_core::aggregate::{Representative, Strategy};
use gcot_core::explore::{Backtracking, RankOverflow, Seeding};
use gcot_core::extract::TaskKind;
use gcot_core::harness::config::{build_backend, build_embedder, open_cache};
use gcot_core::harness::run::{evaluate, MAX_FAILURE_RATE};
use gcot_core::harness::{decode_question, run_benchmark, Confidence, Decoded, Method, RunConfig};
use gcot_core::oracle;
use gcot_core::scoring::SpanAlignMode;

#[derive(Parser)]
#[command(name = "gcot", version, about = "Multi-path chain-of-thought decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one question and print its paths, scores and clusters.
    Decode(DecodeArgs),
    /// Run methods over datasets and seeds, writing records and a summary.
    Bench(BenchArgs),
    /// Run the brute-force verification suites.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedingArg {
    Fibonacci,
    Sequential,
    OneBranch,
}

#[derive(Clone, Copy, ValueEnum)]
enum BacktrackArg {
    LocalMin,
    Random,
    Late,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfidenceArg {
    Gap,
    Entropy,
    Logit,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregateArg {
    Cluster,
    Maxpath,
    Majority,
}

#[derive(Clone, Copy, ValueEnum)]
enum RepresentativeArg {
    First,
    Centroid,
    MaxConf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpanAlignArg {
    Last,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum OverflowArg {
    Skip,
    Clamp,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    FixedNumeric,
    FixedBinary,
    Free,
}

/// Flags shared by `decode` and `bench`. Unset flags keep the defaults.
#[derive(Args)]
struct Tuning {
    /// `toy:<script>` or `http:<url>`.
    #[arg(long)]
    backend: String,
    /// `hash` or `http:<url>`.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Ranked alternates requested per position from a remote backend.
    #[arg(long)]
    alternates: Option<usize>,
    /// First-stage branch count.
    #[arg(long)]
    k: Option<usize>,
    /// Second-stage branch count.
    #[arg(long)]
    kprime: Option<usize>,
    /// Confidence threshold for backtracking.
    #[arg(long)]
    delta: Option<f64>,
    /// Cosine threshold for answer clustering.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    seeding: Option<SeedingArg>,
    #[arg(long, value_enum)]
    backtrack: Option<BacktrackArg>,
    #[arg(long)]
    max_backtracks: Option<usize>,
    #[arg(long, value_enum)]
    rank_overflow: Option<OverflowArg>,
    /// Keep original paths next to their re-branched children.
    #[arg(long)]
    keep_original: bool,
    #[arg(long, value_enum)]
    confidence: Option<ConfidenceArg>,
    #[arg(long, value_enum)]
    aggregate: Option<AggregateArg>,
    #[arg(long, value_enum)]
    representative: Option<RepresentativeArg>,
    #[arg(long, value_enum)]
    spanalign_mode: Option<SpanAlignArg>,
    /// Answer-extraction template appended after the reasoning.
    #[arg(long)]
    template: Option<String>,
    /// Maximum tokens per reasoning path.
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    max_answer_tokens: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    sc_samples: Option<usize>,
    /// Score CoT-decoding on the templated answer instead of a rule span.
    #[arg(long)]
    cot_prompt_spans: bool,
    /// File whose text is placed before every question.
    #[arg(long)]
    prefix_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Response cache file for remote requests.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, default_value = "gcot")]
    method: Method,
    /// Question text (the full prompt for the backend).
    #[arg(long)]
    question: String,
    #[arg(long, value_enum, default_value = "free")]
    task: TaskArg,
    /// Gold answer; when given, the metrics are printed too.
    #[arg(long)]
    gold: Vec<String>,
    /// Print the decoded result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    tuning: Tuning,
    /// Methods to run (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "gcot")]
    method: Vec<Method>,
    /// JSONL dataset (repeatable).
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn apply(t: &Tuning, cfg: &mut RunConfig) -> anyhow::Result<()> {
    cfg.backend = t.backend.clone();
    if let Some(e) = &t.embedder {
        cfg.embedder = e.clone();
    }
    cfg.model = t.model.clone().or(cfg.model.take());
    cfg.embed_model = t.embed_model.clone().or(cfg.embed_model.take());
    let b = &mut cfg.branch;
    b.k = t.k.unwrap_or(b.k);
    b.k_prime = t.kprime.unwrap_or(b.k_prime);
    b.delta = t.delta.unwrap_or(b.delta);
    b.max_backtracks_per_path = t.max_backtracks.unwrap_or(b.max_backtracks_per_path);
    b.keep_original |= t.keep_original;
    if let Some(s) = t.seeding {
        b.seeding = match s {
            SeedingArg::Fibonacci => Seeding::Fibonacci,
            SeedingArg::Sequential => Seeding::Sequential,
            SeedingArg::OneBranch => Seeding::OneBranch,
        };
    }
    if let Some(s) = t.backtrack {
        b.backtracking = match s {
            BacktrackArg::LocalMin => Backtracking::LocalMinima,
            BacktrackArg::Random => Backtracking::Random,
            BacktrackArg::Late => Backtracking::Late,
            BacktrackArg::None => Backtracking::None,
        };
    }
    if let Some(o) = t.rank_overflow {
        b.rank_overflow = match o {
            OverflowArg::Skip => RankOverflow::Skip,
            OverflowArg::Clamp => RankOverflow::Clamp,
        };
    }
    if let Some(n) = t.max_tokens {
        b.max_path_tokens = n;
        cfg.sampler.max_tokens = n;
    }
    let a = &mut cfg.aggregation;
    a.tau = t.tau.unwrap_or(a.tau);
    if let Some(s) = t.aggregate {
        a.strategy = match s {
            AggregateArg::Cluster => Strategy::Cluster,
            AggregateArg::Maxpath => Strategy::Maxpath,
            AggregateArg::Majority => Strategy::Majority,
        };
    }
    if let Some(r) = t.representative {
        a.representative = match r {
            RepresentativeArg::First => Representative::First,
            RepresentativeArg::Centroid => Representative::Centroid,
            RepresentativeArg::MaxConf => Representative::MaxConf,
        };
    }
    if let Some(c) = t.confidence {
        cfg.confidence = match c {
            ConfidenceArg::Gap => Confidence::Gap,
            ConfidenceArg::Entropy => Confidence::Entropy,
            ConfidenceArg::Logit => Confidence::Logit,
        };
    }
    if let Some(m) = t.spanalign_mode {
        cfg.spanalign_mode = match m {
            SpanAlignArg::Last => SpanAlignMode::Last,
            SpanAlignArg::Mean => SpanAlignMode::Mean,
        };
    }
    let s = &mut cfg.sampler;
    s.temperature = t.temperature.unwrap_or(s.temperature);
    s.top_k = t.top_k.unwrap_or(s.top_k);
    s.top_p = t.top_p.or(s.top_p);
    s.beam_width = t.beam_width.unwrap_or(s.beam_width);
    s.sc_samples = t.sc_samples.unwrap_or(s.sc_samples);
    if let Some(tpl) = &t.template {
        cfg.template = tpl.clone();
    }
    cfg.max_answer_tokens = t.max_answer_tokens.unwrap_or(cfg.max_answer_tokens);
    cfg.alternates = t.alternates.unwrap_or(cfg.alternates);
    cfg.cot_prompt_spans |= t.cot_prompt_spans;
    if let Some(p) = &t.prefix_file {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading prefix file {}", p.display()))?;
        cfg.prompt_prefix = Some(text.trim_end().to_string());
    }
    cfg.seed = t.seed.unwrap_or(cfg.seed);
    cfg.cache = t.cache.clone().or(cfg.cache.take());
    cfg.validate()?;
    Ok(())
}

fn print_decoded(d: &Decoded) {
    println!("paths:");
    for (i, p) in d.paths.iter().enumerate() {
        let mut tags = Vec::new();
        if let Some(r) = p.seed_rank {
            tags.push(format!("rank={r}"));
        }
        if let Some(b) = p.backtrack_at {
            tags.push(format!("backtrack@{b}"));
        }
        if let Some(c) = p.confidence {
            tags.push(format!("conf={c:.4}"));
        }
        if let Some(c) = p.cluster {
            tags.push(format!("cluster={c}"));
        }
        println!("  [{i}] {} | {}", tags.join(" "), p.text.trim());
        if let Some(a) = &p.answer {
            println!("       answer: {a}");
        }
    }
    if !d.clusters.is_empty() {
        println!("clusters:");
        for (j, c) in d.clusters.iter().enumerate() {
            println!(
                "  ({j}) {:.4} {:?} members={:?}",
                c.cumulative, c.representative, c.members
            );
        }
    }
    if let Some(n) = d.trigger_count {
        println!("backtracking triggers: {n}");
    }
    println!("answer: {}", d.answer.as_deref().unwrap_or("<none>"));
}

fn decode(args: DecodeArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig::default();
    apply(&args.tuning, &mut cfg)?;
    let cache = open_cache(&cfg)?;
    let backend = build_backend(&cfg, cache.clone())?;
    let embedder = build_embedder(&cfg, cache)?;
    let task = match args.task {
        TaskArg::FixedNumeric => TaskKind::FixedNumeric,
        TaskArg::FixedBinary => TaskKind::FixedBinary,
        TaskArg::Free => TaskKind::Free,
    };
    let prompt = match &cfg.prompt_prefix {
        Some(p) => format!("{p}\n\n{}", args.question),
        None => args.question.clone(),
    };
    let seed = cfg.run_seed(0);
    let d = decode_question(
        args.method,
        &prompt,
        task,
        &cfg,
        &*backend,
        &*embedder,
        seed,
    )?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&d)?);
    } else {
        print_decoded(&d);
    }
    if !args.gold.is_empty() {
        let ex = gcot_core::harness::QaExample {
            id: "cli".into(),
            question: args.question,
            context: None,
            gold_answers: args.gold,
            task_kind: task,
        };
        for (k, v) in evaluate(&ex, args.method, &d) {
            println!("{k}: {v}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig {
        methods: args.method,
        datasets: args.dataset,
        out: args.out,
        ..RunConfig::default()
    };
    cfg.runs = args.runs.unwrap_or(cfg.runs);
    apply(&args.tuning, &mut cfg)?;
    let s = run_benchmark(&cfg)?;
    println!(
        "{:<18} {:<14} {:<9} {:>8} {:>9} {:>9}",
        "method", "dataset", "metric", "mean", "trigger", "repaired"
    );
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    for r in &s.rows {
        println!(
            "{:<18} {:<14} {:<9} {:>8.4} {:>9} {:>9}",
            r.method.name(),
            r.dataset,
            r.metric,
            r.mean,
            opt(r.trigger_rate),
            opt(r.success_given_trigger)
        );
    }
    println!(
        "{} records, {} failed; wrote {} and {}",
        s.records,
        s.failures,
        s.records_path.display(),
        s.summary_path.display()
    );
    if s.too_many_failures() {
        eprintln!(
            "error: {:.1}% of examples failed (limit {:.0}%)",
            100.0 * s.failure_rate(),
            100.0 * MAX_FAILURE_RATE
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_oracle(args: OracleArgs) -> anyhow::Result<ExitCode> {
    let mut failed = 0;
    for rep in oracle::all_suites(args.seed) {
        let status = if rep.passed() { "ok" } else { "FAILED" };
        println!("{:<22} {:>6} cases  {status}", rep.name, rep.cases);
        if let Some(e) = &rep.example {
            println!("  first mismatch: {e}");
        }
        failed += !rep.passed() as usize;
    }
    if failed > 0 {
        bail!("{failed} suite(s) failed");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Decode(a) => decode(a),
        Command::Bench(a) => bench(a),
        Command::Oracle(a) => run_oracle(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
