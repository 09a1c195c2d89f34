use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use oad_core::backends::conformance::run_conformance;
use oad_core::backends::server::serve_mock_blocking;
use oad_core::backends::{BackendConfig, Endpoint, HttpTransport, MockConfig, MockWorld, Role};
use oad_core::config::{load_scenario, AppConfig};
use oad_core::eval::ablation::{grid, CellOutcome};
use oad_core::eval::report::{from_jsonl, to_jsonl};
use oad_core::eval::{load_dataset, render_table, run_ablation, EvalReport, GridKind, VqaSample};
use oad_core::mka::{load_examples, memory_load, memory_persist, memory_seed, MemoryStore};
use oad_core::pipeline::{memory_audit, run_dataset, DatasetRun, SampleTranscript};
use oad_core::Example;

const API_KEY_ENV: &str = "OAD_LLM_API_KEY";

#[derive(Parser)]
#[command(name = "oad", version, about = "Knowledge-based VQA prompting engine")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set mka.n=2. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Start from this memory file instead of an empty one.
    #[arg(long)]
    memory_in: Option<PathBuf>,
    /// Write the final memory here.
    #[arg(long)]
    memory_out: Option<PathBuf>,
    /// Seed examples (one JSON example per line) for pipeline.seed_k.
    #[arg(long)]
    seed_examples: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a dataset and write transcripts and metrics.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline and print the score table.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation grid, each cell against fresh memory.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// modules, seeds or layouts
        #[arg(long, default_value = "modules")]
        grid: GridKind,
        #[arg(long)]
        seed_examples: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the deterministic mock backends over HTTP.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = oad_core::backends::mock::DEFAULT_FEATURE_DIM)]
        feature_dim: usize,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Make an endpoint always fail, e.g. --fail-endpoint llm.
        #[arg(long, value_parser = parse_endpoint)]
        fail_endpoint: Vec<Endpoint>,
    },
    /// Check a backend server against the wire protocol.
    Conformance {
        #[arg(long)]
        base_url: String,
        /// Endpoint to check, e.g. --endpoint vqa. Repeatable; all when omitted.
        #[arg(long, value_parser = parse_endpoint)]
        endpoint: Vec<Endpoint>,
        /// Feature length the VQA role must produce.
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
    },
    /// Build, inspect or compact memory files.
    Memory {
        #[command(subcommand)]
        command: MemoryCommand,
    },
    /// Render the score table from run or ablation output directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Create a memory file holding the first K examples.
    Seed {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        k: usize,
        /// Examples file; generated from the mock when omitted.
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a memory file's summary and first entries.
    Inspect {
        memory: PathBuf,
        #[arg(long, default_value_t = 5)]
        limit: usize,
    },
    /// Drop unusable entries and optionally keep only the newest ones.
    Compact {
        memory: PathBuf,
        #[arg(long)]
        keep: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_endpoint(s: &str) -> Result<Endpoint, String> {
    Endpoint::ALL
        .into_iter()
        .find(|e| serde_json::to_value(e).ok().and_then(|v| v.as_str().map(|n| n == s)).unwrap_or(false) || e.path() == s)
        .ok_or_else(|| format!("unknown endpoint {s:?}"))
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

trait Classify<T> {
    fn config_err(self) -> Result<T, Failure>;
    fn runtime_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn load_config(args: &ConfigArgs) -> Result<AppConfig, Failure> {
    AppConfig::load(args.config.as_deref(), &args.overrides).config_err()
}

fn mock_world(cfg: &AppConfig) -> Result<MockWorld, Failure> {
    Ok(MockWorld::new(cfg.backends.mock_config().config_err()?))
}

/// The configured dataset, or synthetic samples from the mock when no
/// questions file is set.
fn samples(cfg: &AppConfig) -> Result<Vec<VqaSample>, Failure> {
    let e = &cfg.eval;
    match &e.questions {
        Some(q) => load_dataset(e.format, q, e.annotations.as_deref(), &e.image_uri_template).runtime_err(),
        None => Ok(mock_world(cfg)?.synthetic_dataset(e.synthetic_samples)),
    }
}

fn seed_pool(cfg: &AppConfig, path: Option<&Path>, k: usize) -> Result<Vec<Example>, Failure> {
    match path {
        Some(p) => load_examples(p).with_context(|| format!("reading {}", p.display())).runtime_err(),
        None => Ok(mock_world(cfg)?.synthetic_seed_examples(k)),
    }
}

fn run_pipeline(args: &RunArgs) -> Result<(DatasetRun, AppConfig), Failure> {
    let cfg = load_config(&args.config)?;
    let pcfg = cfg.pipeline_config();
    let backends = cfg.build_backends(std::env::var(API_KEY_ENV).ok()).config_err()?;
    let samples = samples(&cfg)?;
    let mut store = match &args.memory_in {
        Some(p) => memory_load(p).with_context(|| format!("loading {}", p.display())).runtime_err()?,
        None => MemoryStore::new(pcfg.mka.capacity),
    };
    if args.memory_in.is_none() && pcfg.enable_mka && pcfg.seed_k > 0 {
        let pool = seed_pool(&cfg, args.seed_examples.as_deref(), pcfg.seed_k)?;
        let report = memory_seed(&mut store, &pool, pcfg.seed_k, backends.client.as_ref()).runtime_err()?;
        if let Some((pos, e)) = report.failures.first() {
            return Err(Failure::Runtime(anyhow!("seed example {}: {e}", pos + 1)));
        }
    }
    let initial = store.len();
    let run = run_dataset(backends.client.as_ref(), &pcfg, &mut store, &samples).runtime_err()?;
    memory_audit(initial, &run.transcripts).map_err(anyhow::Error::msg).runtime_err()?;
    if let Some(p) = &args.memory_out {
        memory_persist(&store, p).with_context(|| format!("writing {}", p.display())).runtime_err()?;
    }
    Ok((run, cfg))
}

fn write_config(dir: &Path, cfg: &AppConfig) -> anyhow::Result<()> {
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn cmd_run(args: &RunArgs, out: Option<&Path>) -> Result<(), Failure> {
    let (run, cfg) = run_pipeline(args)?;
    if let Some(dir) = out {
        run.write_to(dir).with_context(|| format!("writing {}", dir.display())).runtime_err()?;
        write_config(dir, &cfg).runtime_err()?;
    }
    print!("{}", render_table(std::slice::from_ref(&run.report)));
    Ok(())
}

fn cmd_ablate(config: &ConfigArgs, kind: GridKind, seed_examples: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let cells = grid(kind, &cfg.pipeline_config());
    let backends = cfg.build_backends(std::env::var(API_KEY_ENV).ok()).config_err()?;
    let samples = samples(&cfg)?;
    let max_k = cells.iter().map(|c| c.config.seed_k).max().unwrap_or(0);
    let pool = seed_pool(&cfg, seed_examples, max_k)?;
    let results = run_ablation(backends.client.as_ref(), &cells, &samples, &pool).map_err(anyhow::Error::msg).config_err()?;

    fs::create_dir_all(out).context("creating output directory").runtime_err()?;
    for (i, r) in results.iter().enumerate() {
        let dir = out.join(format!("cell-{i}"));
        match &r.outcome {
            CellOutcome::Completed(run) => run.write_to(&dir).runtime_err()?,
            CellOutcome::Failed(msg) => {
                fs::create_dir_all(&dir).runtime_err()?;
                fs::write(dir.join("error.txt"), format!("{msg}\n")).runtime_err()?;
                eprintln!("cell {} failed: {msg}", r.label);
            }
        }
    }
    let reports: Vec<EvalReport> = results.iter().map(|r| r.report.clone()).collect();
    fs::write(out.join("ablation.jsonl"), to_jsonl(&reports)).runtime_err()?;
    let table = render_table(&reports);
    fs::write(out.join("report.txt"), &table).runtime_err()?;
    write_config(out, &cfg).runtime_err()?;
    print!("{table}");
    let failed: Vec<&str> = results.iter().filter(|r| r.failed_entirely()).map(|r| r.label.as_str()).collect();
    if !failed.is_empty() {
        return Err(Failure::Runtime(anyhow!("{} cell(s) failed entirely: {}", failed.len(), failed.join(", "))));
    }
    Ok(())
}

fn cmd_serve(
    host: &str,
    port: u16,
    seed: u64,
    feature_dim: usize,
    scenario: Option<&Path>,
    fail: &[Endpoint],
) -> Result<(), Failure> {
    if feature_dim == 0 {
        return Err(Failure::Config(anyhow!("--feature-dim must be at least 1")));
    }
    let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port").config_err()?;
    let mut mc = MockConfig::new(seed, feature_dim);
    if let Some(p) = scenario {
        mc = mc.with_scenario(load_scenario(p).config_err()?);
    }
    for &e in fail {
        mc = mc.failing(e);
    }
    eprintln!("serving mock backends on http://{addr}");
    serve_mock_blocking(Arc::new(MockWorld::new(mc)), addr).runtime_err()
}

fn cmd_conformance(base_url: &str, endpoints: &[Endpoint], dim: Option<usize>, timeout_ms: u64) -> Result<(), Failure> {
    let configs: Vec<BackendConfig> =
        Role::ALL.iter().map(|&r| BackendConfig { timeout_ms, retries: 0, ..BackendConfig::new(r, base_url) }).collect();
    let transport = HttpTransport::new(&configs, None).map_err(anyhow::Error::msg).config_err()?;
    let endpoints = if endpoints.is_empty() { &Endpoint::ALL[..] } else { endpoints };
    let report = run_conformance(&transport, endpoints, dim);
    print!("{report}");
    let failed = report.failures().count();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!("{failed} of {} checks failed", report.checks.len())));
    }
    Ok(())
}

fn cmd_memory(command: &MemoryCommand) -> Result<(), Failure> {
    match command {
        MemoryCommand::Seed { config, k, examples, out } => {
            let cfg = load_config(config)?;
            let backends = cfg.build_backends(std::env::var(API_KEY_ENV).ok()).config_err()?;
            let pool = seed_pool(&cfg, examples.as_deref(), *k)?;
            let mut store = MemoryStore::new(cfg.mka.capacity);
            let report = memory_seed(&mut store, &pool, *k, backends.client.as_ref()).runtime_err()?;
            for (pos, e) in &report.failures {
                eprintln!("example {}: {e}", pos + 1);
            }
            memory_persist(&store, out).runtime_err()?;
            println!(
                "wrote {} examples to {} ({} duplicates, {} failed)",
                store.len(),
                out.display(),
                report.duplicates,
                report.failures.len()
            );
            if !report.failures.is_empty() {
                return Err(Failure::Runtime(anyhow!("{} seed example(s) could not be embedded", report.failures.len())));
            }
        }
        MemoryCommand::Inspect { memory, limit } => {
            let store = memory_load(memory).runtime_err()?;
            println!("examples: {}", store.len());
            println!("dim: {}", store.feature_dim().map_or_else(|| "unset".to_owned(), |d| d.to_string()));
            println!("capacity: {}", store.capacity().map_or_else(|| "unbounded".to_owned(), |c| c.to_string()));
            println!("next index: {}", store.next_index());
            for e in store.entries().take(*limit) {
                println!(
                    "{:>6}  {}  Q: {}  A: {}",
                    e.index,
                    e.example.caption.text(),
                    e.example.qa.question(),
                    e.example.qa.answer()
                );
            }
        }
        MemoryCommand::Compact { memory, keep, out } => {
            let mut store = memory_load(memory).runtime_err()?;
            let removed = store.compact(*keep);
            memory_persist(&store, out).runtime_err()?;
            println!("removed {removed}, kept {}", store.len());
        }
    }
    Ok(())
}

/// Recomputes each directory's report from its transcripts, or reads an
/// ablation summary.
fn cmd_report(dirs: &[PathBuf]) -> Result<(), Failure> {
    let mut reports = Vec::new();
    for dir in dirs {
        let ablation = dir.join("ablation.jsonl");
        if ablation.exists() {
            let text = fs::read_to_string(&ablation).runtime_err()?;
            reports.extend(from_jsonl::<EvalReport>(&text).context("parsing ablation.jsonl").runtime_err()?);
            continue;
        }
        let metrics: EvalReport = serde_json::from_str(
            &fs::read_to_string(dir.join("metrics.json")).with_context(|| format!("{}: no metrics.json", dir.display())).runtime_err()?,
        )
        .context("parsing metrics.json")
        .runtime_err()?;
        let text = fs::read_to_string(dir.join("transcripts.jsonl")).runtime_err()?;
        let transcripts: Vec<SampleTranscript> = from_jsonl(&text).context("parsing transcripts.jsonl").runtime_err()?;
        let report = EvalReport::from_transcripts(metrics.label.clone(), &transcripts, metrics.config.clone());
        if report != metrics {
            return Err(Failure::Runtime(anyhow!("{}: transcripts do not reproduce metrics.json", dir.display())));
        }
        reports.push(report);
    }
    print!("{}", render_table(&reports));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { run, out } => cmd_run(&run, Some(&out)),
        Command::Eval { run, out } => cmd_run(&run, out.as_deref()),
        Command::Ablate { config, grid, seed_examples, out } => cmd_ablate(&config, grid, seed_examples.as_deref(), &out),
        Command::ServeMock { host, port, seed, feature_dim, scenario, fail_endpoint } => {
            cmd_serve(&host, port, seed, feature_dim, scenario.as_deref(), &fail_endpoint)
        }
        Command::Conformance { base_url, endpoint, feature_dim, timeout_ms } => {
            cmd_conformance(&base_url, &endpoint, feature_dim, timeout_ms)
        }
        Command::Memory { command } => cmd_memory(&command),
        Command::Report { dirs } => cmd_report(&dirs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, e) = match &f {
                Failure::Config(e) => ("configuration error", e),
                Failure::Runtime(e) => ("error", e),
            };
            eprintln!("{kind}: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
