use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use fcaroute::config::ConfigError;
use fcaroute::datagen::{self, DataError};
use fcaroute::report::{self, RunLabel};
use fcaroute::simulator::{RunResult, SimError};
use fcaroute::{Dataset, GenParams, MaintenanceMode, SimConfig, Strategy};

const SEED_ENV: &str = "FCAROUTE_SEED";

#[derive(Parser)]
#[command(
    name = "fcaroute",
    version,
    about = "Concept-based query routing simulator"
)]
struct Cli {
    /// Print interval summaries to stderr.
    #[arg(long, global = true)]
    progress: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Simulate one configuration and write per-interval metrics.
    Run(RunArgs),
    /// Simulate a strategy x TTL grid on one dataset.
    Compare(CompareArgs),
    /// Per-round knowledge base sizes and maintenance cost, static vs incremental.
    KbStats(KbStatsArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// File of key=value generator parameters; flags take precedence.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, alias = "peers")]
    n_peers: Option<usize>,
    #[arg(long, alias = "docs")]
    n_docs: Option<usize>,
    #[arg(long, alias = "queries")]
    n_queries: Option<usize>,
    #[arg(long, alias = "topics")]
    n_topics: Option<usize>,
    #[arg(long)]
    terms_per_topic: Option<usize>,
    #[arg(long)]
    doc_terms: Option<usize>,
    #[arg(long)]
    query_terms: Option<usize>,
    #[arg(long)]
    replication_factor: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    zipf_exponent: Option<f64>,
    #[arg(long)]
    home_topic_weight: Option<f64>,
    #[arg(long)]
    interest_locality: Option<f64>,
    #[arg(long)]
    replica_locality: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Overrides for every `SimConfig` field.
#[derive(Args)]
struct SimOverrides {
    /// key=value simulation config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pmax: Option<String>,
    #[arg(long)]
    overlay_size: Option<String>,
    #[arg(long)]
    warmup_queries: Option<String>,
    /// Comma-separated global query counts.
    #[arg(long)]
    update_schedule: Option<String>,
    #[arg(long)]
    intermediate_strategy: Option<String>,
    #[arg(long)]
    update_scope: Option<String>,
    #[arg(long)]
    per_peer_update_every: Option<String>,
    #[arg(long)]
    sqpc_min_overlap: Option<String>,
    #[arg(long)]
    fallback: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    interval: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ttl: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    maintenance_mode: Option<String>,
    #[command(flatten)]
    sim: SimOverrides,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated TTL values.
    #[arg(long, default_value = "3,4,5")]
    ttl: String,
    /// Comma-separated strategy names.
    #[arg(long, default_value = "flooding,lps_v2")]
    strategies: String,
    #[arg(long)]
    maintenance_mode: Option<String>,
    #[command(flatten)]
    sim: SimOverrides,
}

#[derive(Args)]
struct KbStatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ttl: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[command(flatten)]
    sim: SimOverrides,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Data(_) | SimError::OverlaySize { .. } => {
                Failure::Data(e.into())
            }
            _ => Failure::Internal(e.into()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let progress = cli.progress;
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args, progress),
        Command::Compare(args) => cmd_compare(args, progress),
        Command::KbStats(args) => cmd_kb_stats(args, progress),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| usage(format!("{SEED_ENV}={v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Data)
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let mut params = match &args.params {
        Some(path) => GenParams::parse_str(&read_text(path)?).map_err(|e| {
            Failure::Data(anyhow::Error::new(e).context(path.display().to_string()))
        })?,
        None => GenParams::default(),
    };
    if let Some(seed) = env_seed()? {
        params.seed = seed;
    }
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { params.$field = v; })*
        };
    }
    apply!(
        n_peers,
        n_docs,
        n_queries,
        n_topics,
        terms_per_topic,
        doc_terms,
        query_terms,
        replication_factor,
        degree,
        zipf_exponent,
        home_topic_weight,
        interest_locality,
        replica_locality,
        seed
    );
    for w in params.warnings() {
        eprintln!("warning: {w}");
    }
    let ds = datagen::generate(&params)?;
    ds.save(&args.out)?;
    Ok(())
}

/// Config file, then `FCAROUTE_SEED`, then flags.
fn build_config(
    sim: &SimOverrides,
    flags: &[(&str, &Option<String>)],
) -> Result<SimConfig, Failure> {
    let mut cfg = match &sim.config {
        Some(path) => SimConfig::parse_str(&read_text(path)?).map_err(|e| {
            Failure::Data(anyhow::Error::new(e).context(path.display().to_string()))
        })?,
        None => SimConfig::default(),
    };
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    let common = [
        ("pmax", &sim.pmax),
        ("overlay_size", &sim.overlay_size),
        ("warmup_queries", &sim.warmup_queries),
        ("update_schedule", &sim.update_schedule),
        ("intermediate_strategy", &sim.intermediate_strategy),
        ("update_scope", &sim.update_scope),
        ("per_peer_update_every", &sim.per_peer_update_every),
        ("sqpc_min_overlap", &sim.sqpc_min_overlap),
        ("fallback", &sim.fallback),
        ("seed", &sim.seed),
        ("interval", &sim.interval),
    ];
    for (key, value) in flags.iter().copied().chain(common) {
        if let Some(v) = value {
            cfg.set(key, v)
                .map_err(|e| usage(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_dataset(dir: &Path) -> Result<Dataset, Failure> {
    Ok(Dataset::load(dir)?)
}

fn with_output(
    out: &Option<PathBuf>,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), Failure> {
    let res = match out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(Failure::Data)?;
            let mut w = BufWriter::new(file);
            body(&mut w).and_then(|()| w.flush())
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w).and_then(|()| w.flush())
        }
    };
    res.context("writing output").map_err(Failure::Data)
}

fn report_progress(label: &RunLabel, result: &RunResult) {
    for m in &result.intervals {
        eprintln!(
            "[{} ttl={} {}] interval {}: recall {:.4}, messages {:.2}, concepts {:.1}",
            label.strategy,
            label.ttl,
            label.mode,
            m.interval_index,
            m.mean_recall,
            m.mean_messages,
            m.kb_concepts_mean
        );
    }
}

fn label_of(cfg: &SimConfig) -> RunLabel {
    RunLabel {
        strategy: cfg.strategy,
        ttl: cfg.ttl,
        mode: cfg.maintenance_mode,
    }
}

fn cmd_run(args: RunArgs, progress: bool) -> Result<(), Failure> {
    let cfg = build_config(
        &args.sim,
        &[
            ("ttl", &args.ttl),
            ("strategy", &args.strategy),
            ("maintenance_mode", &args.maintenance_mode),
        ],
    )?;
    let ds = load_dataset(&args.dataset)?;
    let result = fcaroute::run(&cfg, &ds)?;
    let label = label_of(&cfg);
    if progress {
        report_progress(&label, &result);
    }
    with_output(&args.out, |w| {
        report::write_intervals_csv(w, &label, &result.intervals)
    })
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| usage(format!("--{flag}: {s:?}: {e}")))
        })
        .collect()
}

fn cmd_compare(args: CompareArgs, progress: bool) -> Result<(), Failure> {
    let ttls: Vec<u32> = parse_list("ttl", &args.ttl)?;
    let strategies: Vec<Strategy> = parse_list("strategies", &args.strategies)?;
    if strategies.is_empty() {
        return Err(usage("--strategies: at least one strategy is required"));
    }
    if ttls.is_empty() {
        return Err(usage("--ttl: at least one value is required"));
    }
    if ttls.contains(&1) {
        eprintln!("warning: ttl 1 only reaches the origin's direct targets");
    }
    let base = build_config(&args.sim, &[("maintenance_mode", &args.maintenance_mode)])?;
    let ds = load_dataset(&args.dataset)?;

    let mut cells: Vec<SimConfig> = Vec::new();
    for &strategy in &strategies {
        for &ttl in &ttls {
            let cfg = SimConfig {
                strategy,
                ttl,
                ..base.clone()
            };
            cfg.validate()?;
            if !cells.iter().any(|c| label_of(c) == label_of(&cfg)) {
                cells.push(cfg);
            }
        }
    }
    let mut results: Vec<(RunLabel, RunResult)> = cells
        .par_iter()
        .map(|cfg| fcaroute::run(cfg, &ds).map(|r| (label_of(cfg), r)))
        .collect::<Result<_, _>>()?;
    results.sort_by_key(|(label, _)| *label);

    if progress {
        for (label, r) in &results {
            report_progress(label, r);
        }
    }
    with_output(&args.out, |w| {
        writeln!(w, "{}", report::INTERVAL_HEADER)?;
        for (label, r) in &results {
            report::write_interval_rows(w, label, &r.intervals)?;
        }
        writeln!(w)?;
        writeln!(w, "{}", report::SUMMARY_HEADER)?;
        for (label, r) in &results {
            report::write_summary_row(w, label, &r.summary)?;
        }
        Ok(())
    })
}

fn cmd_kb_stats(args: KbStatsArgs, progress: bool) -> Result<(), Failure> {
    let base = build_config(
        &args.sim,
        &[("ttl", &args.ttl), ("strategy", &args.strategy)],
    )?;
    let ds = load_dataset(&args.dataset)?;
    let results: Vec<RunResult> = [MaintenanceMode::Static, MaintenanceMode::Incremental]
        .par_iter()
        .map(|&mode| {
            let cfg = SimConfig {
                maintenance_mode: mode,
                ..base.clone()
            };
            fcaroute::run(&cfg, &ds)
        })
        .collect::<Result<_, _>>()?;
    if progress {
        for r in &results {
            for round in &r.rounds {
                eprintln!(
                    "[{}] round {} at query {}: e1 {:.1}, e2 {:.1}, work {}",
                    round.mode,
                    round.round,
                    round.at_query,
                    round.e1_mean,
                    round.e2_mean,
                    round.work_total
                );
            }
        }
    }
    with_output(&args.out, |w| {
        writeln!(w, "{}", report::ROUNDS_HEADER)?;
        for r in &results {
            for round in &r.rounds {
                report::write_round_row(w, round)?;
            }
        }
        Ok(())
    })
}
