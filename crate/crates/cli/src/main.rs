use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crashsolver_core::bench::{
    build_catalog, draft_case, parse_dump, passes_criteria, pool_stats, render_stats, sample, ExceptionCatalog,
    ThreadRecord,
};
use crashsolver_core::crash::{read_case_pool, CaseRecord};
use crashsolver_core::eval::{compute_groups, read_records, render_table, GroupKey, Metric, TableSpec};
use crashsolver_core::gateway::ProviderConfig;
use crashsolver_service::{ProviderRegistry, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "crashsolver", version, about = "Interactive crash-bug diagnosis and repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark construction from Q&A dumps.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Evaluation tables.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Filter a Posts.xml dump down to threads meeting all six criteria.
    Mine(MineArgs),
    /// Sample threads into case drafts for annotation.
    Sample(SampleArgs),
    /// Size statistics of a curated case pool.
    Stats(StatsArgs),
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    dump: PathBuf,
    /// Exception catalog files; the bundled JDK list when none are given.
    #[arg(long = "catalog")]
    catalogs: Vec<PathBuf>,
    /// Names accepted into the catalog despite lacking an exception suffix.
    #[arg(long = "whitelist")]
    whitelist: Vec<String>,
    /// Passing threads, one JSON object per line.
    #[arg(long)]
    out: PathBuf,
    /// Per-thread criteria results for every thread read.
    #[arg(long)]
    criteria_report: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Threads written by `bench mine`.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Case drafts, one JSON object per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Case pool (JSON lines).
    #[arg(long)]
    pool: PathBuf,
    /// Print JSON instead of a markdown table.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Aggregate evaluation records into a comparison table.
    Run(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    records: PathBuf,
    /// Records carry three runs per case; success uses the two-of-three rule.
    #[arg(long)]
    three_run: bool,
    #[arg(long, value_delimiter = ',', default_value = "model,category,prompt")]
    group_by: Vec<GroupKey>,
    /// Metric names, e.g. localization_accuracy,repair_success,solution_num.
    #[arg(long, value_delimiter = ',', default_value = "localization_accuracy,repair_accuracy", value_parser = parse_metric)]
    metrics: Vec<Metric>,
    /// Prompt (or last grouping column) value the deltas are taken against.
    #[arg(long)]
    baseline: Option<String>,
    /// Markdown output file; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// `[name=]spec` where spec is `http`, `replay:<file>` or `scripted:<file>`.
    /// Repeatable; the first one is the default.
    #[arg(long = "provider", default_value = "http")]
    providers: Vec<String>,
    /// Case pool addressable by `case_id`.
    #[arg(long)]
    cases: Option<PathBuf>,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_string())).map_err(|_| format!("unknown metric {s:?}"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_jsonl<T: serde::Serialize>(out: &mut impl Write, item: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, item)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), idx + 1))?);
    }
    Ok(out)
}

fn mine(args: MineArgs) -> Result<()> {
    let catalog = if args.catalogs.is_empty() {
        ExceptionCatalog::seed()
    } else {
        let build = build_catalog(&args.catalogs, &args.whitelist)?;
        for w in &build.warnings {
            eprintln!("warning: {w}");
        }
        build.catalog
    };
    if catalog.is_empty() {
        bail!("the exception catalog is empty");
    }
    let mut out = create(&args.out)?;
    let mut report = args.criteria_report.as_deref().map(create).transpose()?;
    let mut reader = parse_dump(open(&args.dump)?);
    let (mut read, mut kept) = (0u64, 0u64);
    for item in reader.by_ref() {
        let thread = match item {
            Ok(t) => t,
            Err(e) => {
                eprintln!("warning: {e}");
                continue;
            }
        };
        read += 1;
        let result = passes_criteria(&thread, &catalog);
        if let Some(r) = report.as_mut() {
            write_jsonl(r, &result)?;
        }
        if result.overall {
            kept += 1;
            write_jsonl(&mut out, &thread)?;
        }
    }
    out.flush()?;
    if let Some(r) = report.as_mut() {
        r.flush()?;
    }
    let stats = reader.stats();
    eprintln!(
        "{read} threads read, {kept} kept, {} malformed rows, {} accepted answers joined",
        stats.malformed, stats.answers_joined
    );
    Ok(())
}

fn sample_pool(args: SampleArgs) -> Result<()> {
    let threads: Vec<ThreadRecord> = read_jsonl(&args.pool)?;
    let picked = sample(&threads, args.n, args.seed)?;
    let mut out = create(&args.out)?;
    for t in &picked {
        let draft: CaseRecord = draft_case(t);
        write_jsonl(&mut out, &draft)?;
    }
    out.flush()?;
    eprintln!("{} drafts written", picked.len());
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let cases = read_case_pool(open(&args.pool)?)?;
    let stats = pool_stats(&cases)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", render_stats(&stats));
    }
    Ok(())
}

fn eval_run(args: EvalArgs) -> Result<()> {
    let records = read_records(open(&args.records)?)?;
    let spec = TableSpec {
        group_by: args.group_by,
        metrics: args.metrics,
        baseline: args.baseline,
        three_run: args.three_run,
    };
    let rows = compute_groups(&records, &spec)?;
    let table = render_table(&spec, &rows)?;
    match &args.report {
        Some(path) => std::fs::write(path, &table.markdown).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{}", table.markdown),
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, &table.csv).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn provider_config(spec: &str) -> Result<ProviderConfig> {
    Ok(match spec.split_once(':') {
        None if spec == "http" => ProviderConfig::from_env(),
        Some(("replay", path)) => ProviderConfig::replay(path),
        Some(("scripted", path)) => ProviderConfig::scripted_file(path),
        _ => bail!("unknown provider spec {spec:?}; expected http, replay:<file> or scripted:<file>"),
    })
}

fn registry(specs: &[String]) -> Result<ProviderRegistry> {
    let mut named = Vec::new();
    for s in specs {
        let (name, spec) = match s.split_once('=') {
            Some((n, spec)) => (n.to_string(), spec),
            None => (s.split(':').next().unwrap_or(s).to_string(), s.as_str()),
        };
        named.push((name, provider_config(spec)?));
    }
    let Some((default, _)) = named.first() else {
        bail!("no provider configured");
    };
    let mut registry = ProviderRegistry::new(default.clone());
    for (name, config) in named {
        registry = registry
            .with_config(&name, config)
            .with_context(|| format!("provider {name}"))?;
    }
    Ok(registry)
}

async fn serve(args: ServeArgs) -> Result<()> {
    let cases = match &args.cases {
        Some(path) => read_case_pool(open(path)?)?,
        None => Vec::new(),
    };
    let service = Service::open(ServiceConfig {
        data_dir: args.data_dir.clone(),
        providers: registry(&args.providers)?,
        cases,
    })
    .with_context(|| format!("cannot open data directory {}", args.data_dir.display()))?;
    for e in service.load_errors() {
        tracing::warn!("{e}");
    }
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    crashsolver_service::serve(listener, service).await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Bench(BenchCommand::Mine(a)) => mine(a),
        Command::Bench(BenchCommand::Sample(a)) => sample_pool(a),
        Command::Bench(BenchCommand::Stats(a)) => stats(a),
        Command::Eval(EvalCommand::Run(a)) => eval_run(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
    }
}
