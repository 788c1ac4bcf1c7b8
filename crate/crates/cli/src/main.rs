use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nnm_core::similarity::{CachedEmbedder, RemoteEmbedder};
use nnm_core::{
    build_map, export_gml, export_trajectory_csv, import_gml, run_layout, trajectory_stats,
    AcceptAll, Allowlist, ApiConfig, BackendError, BuildConfig, Clock, Correlation, Embedder,
    EvaluationSession, FallbackEmbedder, FixedClock, FixtureBackend, GenerationBackend,
    LayoutParams, MapGraph, PageExistenceValidator, PromptTemplate, RemoteBackend,
    ResponseValidator, RetryPolicy, Script, SystemClock,
};
use nnm_service::{AppState, Store};

const DEFAULT_TEMPLATE: &str =
    "A short list of countries that are nearest to \"{}\", separated by commas:";

#[derive(Parser)]
#[command(
    name = "nnm",
    version,
    about = "Build, lay out and evaluate neural narrative maps"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a map by prompting a backend, starting from the given seeds.
    Build(BuildArgs),
    /// Assign positions to a map with the force-directed layout.
    Layout(LayoutArgs),
    /// Replay a script over a map and print the trajectory table.
    Eval(EvalArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// Answer prompts from a fixture file instead of the remote API.
    #[arg(long, value_name = "TSV")]
    fixture: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ValidatorKind {
    AcceptAll,
    Allowlist,
    Wikipedia,
}

#[derive(Args)]
struct BuildArgs {
    /// Initial seed names.
    #[arg(required = true)]
    seeds: Vec<String>,
    /// Prompt template with one `{}` placeholder for the seed.
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    template: String,
    #[arg(long, default_value_t = 10)]
    max_queries: usize,
    #[arg(long, value_enum, default_value = "accept-all")]
    validator: ValidatorKind,
    /// Names accepted by the allowlist validator, one per line.
    #[arg(long, value_name = "FILE", required_if_eq("validator", "allowlist"))]
    allowlist: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Lay the map out after building it.
    #[arg(long)]
    layout: bool,
    /// Layout seed, used with --layout.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Timestamp for topic texts (RFC 3339); defaults to now.
    #[arg(long, value_name = "TIME")]
    timestamp: Option<DateTime<Utc>>,
    /// Output map; `.gml` writes GML, anything else JSON.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct LayoutArgs {
    /// Input map (`.gml` or JSON).
    input: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    repulsion: Option<f64>,
    #[arg(long)]
    gravity: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Map with topic texts (JSON).
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    script: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Embed with the remote API instead of the built-in bag of words.
    #[arg(long)]
    remote_embeddings: bool,
    #[arg(long, default_value_t = 1536)]
    embedding_dim: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value = "nnm-data")]
    data_dir: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    remote_embeddings: bool,
    #[arg(long, default_value_t = 1536)]
    embedding_dim: usize,
}

/// Stands in when no backend is configured, so the service can still
/// replay scripts.
struct Unconfigured;

impl GenerationBackend for Unconfigured {
    fn generate(&self, _: &str) -> Result<String, BackendError> {
        Err(BackendError::Transport(
            "no generation backend: pass --fixture or set NNM_API_BASE and NNM_MODEL".into(),
        ))
    }
}

fn backend(args: &BackendArgs, required: bool) -> Result<Arc<dyn GenerationBackend>> {
    if let Some(path) = &args.fixture {
        let fixture = FixtureBackend::load(path)
            .with_context(|| format!("reading fixture {}", path.display()))?;
        return Ok(Arc::new(fixture));
    }
    match RemoteBackend::from_env() {
        Some(remote) => Ok(Arc::new(remote)),
        None if required => bail!("no backend: pass --fixture or set NNM_API_BASE and NNM_MODEL"),
        None => Ok(Arc::new(Unconfigured)),
    }
}

fn embedder(remote: bool, dimension: usize) -> Result<Arc<dyn Embedder>> {
    if !remote {
        return Ok(Arc::new(FallbackEmbedder::default()));
    }
    let config =
        ApiConfig::from_env().context("--remote-embeddings needs NNM_API_BASE and NNM_MODEL")?;
    Ok(Arc::new(CachedEmbedder::new(RemoteEmbedder::new(
        config, dimension,
    ))))
}

fn read_map(path: &Path) -> Result<MapGraph> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if is_gml(path) {
        return import_gml(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let graph: MapGraph =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    graph
        .validate()
        .with_context(|| format!("checking {}", path.display()))?;
    Ok(graph)
}

fn write_map(path: &Path, graph: &MapGraph) -> Result<()> {
    let text = if is_gml(path) {
        export_gml(graph)
    } else {
        serde_json::to_string_pretty(graph)? + "\n"
    };
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn is_gml(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gml"))
}

fn build(args: BuildArgs) -> Result<()> {
    let template = PromptTemplate::new(args.template.as_str())?;
    let backend = backend(&args.backend, true)?;
    let validator: Box<dyn ResponseValidator> = match args.validator {
        ValidatorKind::AcceptAll => Box::new(AcceptAll),
        ValidatorKind::Allowlist => {
            let path = args.allowlist.as_ref().expect("clap requires --allowlist");
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Box::new(Allowlist::parse(&text))
        }
        ValidatorKind::Wikipedia => Box::new(PageExistenceValidator::wikipedia()),
    };
    let clock: Box<dyn Clock> = match args.timestamp {
        Some(t) => Box::new(FixedClock(t)),
        None => Box::new(SystemClock),
    };
    let retry = if args.backend.fixture.is_some() {
        RetryPolicy::immediate(1)
    } else {
        RetryPolicy::default()
    };
    let config = BuildConfig {
        template,
        initial_seeds: args.seeds,
        max_queries: args.max_queries,
        backend: backend.as_ref(),
        validator: validator.as_ref(),
        retry,
        clock: clock.as_ref(),
    };
    let mut out = build_map(&config)?;
    if args.layout {
        run_layout(
            &mut out.graph,
            &LayoutParams {
                seed: args.seed,
                ..LayoutParams::default()
            },
        )?;
    }
    write_map(&args.out, &out.graph)?;
    eprintln!(
        "{} nodes, {} edges from {} queries ({} rejected)",
        out.graph.node_count(),
        out.graph.edge_count(),
        out.report.queries,
        out.report.rejected.len()
    );
    Ok(())
}

fn layout(args: LayoutArgs) -> Result<()> {
    let mut graph = read_map(&args.input)?;
    let defaults = LayoutParams::default();
    let params = LayoutParams {
        seed: args.seed,
        iterations: args.iterations.unwrap_or(defaults.iterations),
        repulsion_k: args.repulsion.unwrap_or(defaults.repulsion_k),
        gravity_k: args.gravity.unwrap_or(defaults.gravity_k),
        ..defaults
    };
    let result = run_layout(&mut graph, &params)?;
    write_map(&args.out, &graph)?;
    eprintln!(
        "{} nodes placed in {} iterations",
        graph.node_count(),
        result.displacement_history.len()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let map = read_map(&args.map)?;
    let script =
        Script::load(&args.script).with_context(|| format!("reading {}", args.script.display()))?;
    let embedder = embedder(args.remote_embeddings, args.embedding_dim)?;
    let mut session = EvaluationSession::new(map, script);
    let records = session.run_to_end(embedder.as_ref())?;
    let csv = export_trajectory_csv(records);
    match &args.csv {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    match trajectory_stats(records) {
        Ok(stats) => match stats.pearson {
            Correlation::Defined(r) => eprintln!(
                "pearson(node_dist, text_similarity) = {r:.4} over {} steps",
                stats.pairs
            ),
            Correlation::Undefined => eprintln!("pearson undefined: a series is constant"),
        },
        Err(e) => eprintln!("no correlation: {e}"),
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let store = Store::open(&args.data_dir)
        .with_context(|| format!("opening {}", args.data_dir.display()))?;
    let state = AppState::new(
        store,
        backend(&args.backend, false)?,
        embedder(args.remote_embeddings, args.embedding_dim)?,
        Arc::new(SystemClock),
    );
    let state = if args.backend.fixture.is_some() {
        state.with_retry(RetryPolicy::immediate(1))
    } else {
        state
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(nnm_service::serve(args.addr, Arc::new(state)))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose {
            tracing::Level::DEBUG
        } else {
            tracing::Level::WARN
        })
        .init();
    let result = match cli.command {
        Command::Build(a) => build(a),
        Command::Layout(a) => layout(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
