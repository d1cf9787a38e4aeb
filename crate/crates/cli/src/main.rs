//! The scenloop command line: generate, simulate, evaluate, refine,
//! batch, replay, and map validation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (bad documents,
//! traces, validation), 3 backend error (remote model unreachable or
//! persistently off-schema).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use scenloop_core::batch::{run_batch, BatchConfig, DEFAULT_RUNS};
use scenloop_core::behavior::BehaviorRegistry;
use scenloop_core::map::{LaneGraph, MapLibrary};
use scenloop_core::metrics::evaluate;
use scenloop_core::nl::keyword::KeywordEngine;
use scenloop_core::nl::remote::{HttpChatModel, RemoteBackend, RemoteConfig};
use scenloop_core::nl::{generate_scenario, GenerationBackend};
use scenloop_core::presets;
use scenloop_core::refine::{refine_until_aligned, DEFAULT_BUDGET};
use scenloop_core::scenario::{parse_scenario, serialize_scenario};
use scenloop_core::sim::{run_scenario, RunOptions, DEFAULT_DURATION};
use scenloop_core::svg::{render_snapshot, snapshot_times};
use scenloop_core::trace::SimTrace;
use scenloop_core::CoreError;

const TOKEN_ENV: &str = "SCENLOOP_API_TOKEN";

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Parser)]
#[command(name = "scenloop", version, about = "Closed-loop driving scenario engine")]
struct Cli {
    /// Path to a TOML config file with [remote] and [defaults] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a natural-language description into a scenario document.
    Generate(GenerateArgs),
    /// Run a scenario document and record a trace.
    Simulate(SimulateArgs),
    /// Compute metrics from a recorded trace.
    Evaluate(EvaluateArgs),
    /// Iteratively align a scenario with its declared intent band.
    Refine(RefineArgs),
    /// Generate, simulate and aggregate a seeded batch of runs.
    Batch(BatchArgs),
    /// Recompute metrics from a trace, optionally rendering snapshots.
    Replay(ReplayArgs),
    /// Map utilities.
    Map {
        #[command(subcommand)]
        command: MapCommand,
    },
}

#[derive(Subcommand)]
enum MapCommand {
    /// Check a map document (or a builtin map id) for consistency.
    Validate {
        /// Path to a map TOML file, or a builtin id (highway, curve, crossroad).
        target: String,
    },
}

#[derive(Args)]
struct DescriptionArgs {
    /// Free-form scene description.
    #[arg(long, conflicts_with = "preset")]
    text: Option<String>,
    /// One of the shipped preset ids (see `--preset help`).
    #[arg(long)]
    preset: Option<String>,
}

impl DescriptionArgs {
    fn resolve(&self) -> Result<(String, String), CliError> {
        if let Some(text) = &self.text {
            return Ok(("custom".to_string(), text.clone()));
        }
        if let Some(id) = &self.preset {
            if id == "help" {
                let ids: Vec<&str> = presets::ALL.iter().map(|p| p.id).collect();
                return Err(CliError::usage(format!(
                    "available presets: {}",
                    ids.join(", ")
                )));
            }
            return match presets::by_id(id) {
                Some(p) => Ok((p.id.to_string(), p.description.to_string())),
                None => Err(CliError::usage(format!("unknown preset '{id}'"))),
            };
        }
        Err(CliError::usage("one of --text or --preset is required"))
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    description: DescriptionArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Backend::Keyword)]
    backend: Backend,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    #[arg(long)]
    duration: Option<f64>,
    /// Record distances for every vehicle pair, not only ego pairs.
    #[arg(long)]
    all_pairs: bool,
    /// Output trace file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    trace: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    scenario: PathBuf,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    duration: Option<f64>,
    /// Where to write the refined scenario document; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Append episode logs to this JSONL file.
    #[arg(long)]
    episodes: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    description: DescriptionArgs,
    #[arg(short = 'n', long, default_value_t = DEFAULT_RUNS)]
    runs: u32,
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    refine: bool,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Backend::Keyword)]
    backend: Backend,
    /// Run directory for per-run artifacts and the report files.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    trace: PathBuf,
    /// Render a top-down SVG snapshot every N seconds.
    #[arg(long, value_name = "SECONDS")]
    svg_every: Option<f64>,
    /// Directory for snapshot files (default: next to the trace).
    #[arg(long)]
    svg_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    /// Deterministic keyword rules, no network.
    Keyword,
    /// Remote chat model from the [remote] config section.
    Remote,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    remote: Option<RemoteConfig>,
    #[serde(default)]
    defaults: Defaults,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Defaults {
    duration: Option<f64>,
    budget: Option<u32>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::BackendUnreachable(_) | CoreError::SchemaViolation { .. } => EXIT_BACKEND,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}


/// stdout may be a closed pipe (e.g. piped into `head`); treat that as a
/// successful, silent exit rather than a panic.
fn emit(body: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(body.as_bytes());
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::data(format!("bad config file: {e}")))
}

fn make_backend(
    kind: Backend,
    config: &FileConfig,
) -> Result<Box<dyn GenerationBackend + Sync>, CliError> {
    match kind {
        Backend::Keyword => Ok(Box::new(KeywordEngine::default())),
        Backend::Remote => {
            let Some(mut remote) = config.remote.clone() else {
                return Err(CliError::usage(
                    "--backend remote needs a [remote] section in the config file",
                ));
            };
            if let Ok(token) = std::env::var(TOKEN_ENV) {
                if !token.is_empty() {
                    remote.api_token = Some(token);
                }
            }
            let retries = remote.max_retries;
            Ok(Box::new(RemoteBackend::new(HttpChatModel::new(remote), retries)))
        }
    }
}

fn write_out(target: Option<&Path>, body: &str) -> Result<(), CliError> {
    match target {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, body)?;
            Ok(())
        }
        None => {
            emit(body);
            Ok(())
        }
    }
}

fn read_scenario(path: &Path) -> Result<scenloop_core::scenario::ScenarioSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_scenario(&text)?)
}

fn read_trace(path: &Path) -> Result<SimTrace, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(SimTrace::from_jsonl(&text)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let library = MapLibrary::builtin();
    let registry = BehaviorRegistry::builtin();

    match cli.command {
        Command::Generate(args) => {
            let (_, description) = args.description.resolve()?;
            let backend = make_backend(args.backend, &config)?;
            let (spec, notes) =
                generate_scenario(&description, args.seed, &library, &registry, backend.as_ref())?;
            for layer in &notes.improvised_layers {
                eprintln!("note: improvised {layer} layer");
            }
            for (id, requested, applied) in &notes.relaxed_placements {
                eprintln!("note: {id} placement relaxed {requested:?} -> {applied:?}");
            }
            if let Some((requested, applied)) = notes.clamped_background {
                eprintln!("note: background count clamped {requested} -> {applied}");
            }
            write_out(args.output.as_deref(), &serialize_scenario(&spec))
        }
        Command::Simulate(args) => {
            let spec = read_scenario(&args.scenario)?;
            let opts = RunOptions {
                duration: args
                    .duration
                    .or(config.defaults.duration)
                    .unwrap_or(DEFAULT_DURATION),
                all_pairs: args.all_pairs,
            };
            let trace = run_scenario(&spec, &library, &registry, &opts)?;
            write_out(args.output.as_deref(), &trace.to_jsonl())
        }
        Command::Evaluate(args) => {
            let trace = read_trace(&args.trace)?;
            let summary = evaluate(&trace)?;
            emit(&serde_json::to_string_pretty(&summary).unwrap());
            emit("\n");
            Ok(())
        }
        Command::Refine(args) => {
            let spec = read_scenario(&args.scenario)?;
            let opts = RunOptions {
                duration: args
                    .duration
                    .or(config.defaults.duration)
                    .unwrap_or(DEFAULT_DURATION),
                all_pairs: false,
            };
            let budget = args
                .budget
                .or(config.defaults.budget)
                .unwrap_or(DEFAULT_BUDGET);
            let (refined, episodes, summary) =
                refine_until_aligned(&spec, &library, &registry, &opts, budget)?;
            if let Some(path) = &args.episodes {
                let mut body = String::new();
                for episode in &episodes {
                    body.push_str(&serde_json::to_string(episode).unwrap());
                    body.push('\n');
                }
                fs::write(path, body)?;
            }
            eprintln!(
                "{} episode(s); final metrics: {}",
                episodes.len(),
                serde_json::to_string(&summary).unwrap()
            );
            write_out(args.output.as_deref(), &serialize_scenario(&refined))
        }
        Command::Batch(args) => {
            let (label, description) = args.description.resolve()?;
            if args.runs == 0 {
                return Err(CliError::usage("-n must be at least 1"));
            }
            let backend = make_backend(args.backend, &config)?;
            let batch = BatchConfig {
                label,
                description,
                runs: args.runs,
                seed_base: args.seed_base,
                duration: args
                    .duration
                    .or(config.defaults.duration)
                    .unwrap_or(DEFAULT_DURATION),
                refine: args.refine,
                budget: args
                    .budget
                    .or(config.defaults.budget)
                    .unwrap_or(DEFAULT_BUDGET),
                workers: args.workers,
                output_dir: args.output.clone(),
            };
            let outcome = run_batch(&batch, &library, &registry, backend.as_ref())?;
            let mut rows = vec![(outcome.label.clone(), outcome.initial.clone())];
            if let Some(refined) = &outcome.refined {
                rows.push((format!("{} (refined)", outcome.label), refined.clone()));
            }
            let (_, md) = scenloop_core::batch::emit_report(&rows);
            emit(&md);
            for (seed, message) in &outcome.failures {
                eprintln!("warning: seed {seed} failed: {message}");
            }
            Ok(())
        }
        Command::Replay(args) => {
            let trace = read_trace(&args.trace)?;
            let summary = evaluate(&trace)?;
            emit(&serde_json::to_string_pretty(&summary).unwrap());
            emit("\n");
            if let Some(every) = args.svg_every {
                if every <= 0.0 {
                    return Err(CliError::usage("--svg-every must be positive"));
                }
                let map = library.get(&trace.header.map_id)?;
                let dir = match &args.svg_dir {
                    Some(d) => d.clone(),
                    None => args
                        .trace
                        .parent()
                        .map(Path::to_path_buf)
                        .unwrap_or_else(|| PathBuf::from(".")),
                };
                fs::create_dir_all(&dir)?;
                for (i, t) in snapshot_times(&trace, every).into_iter().enumerate() {
                    let svg = render_snapshot(&trace, &map, t)?;
                    fs::write(dir.join(format!("snapshot_{:03}.svg", i + 1)), svg)?;
                }
            }
            Ok(())
        }
        Command::Map { command } => match command {
            MapCommand::Validate { target } => {
                let graph = if Path::new(&target).exists() {
                    let text = fs::read_to_string(&target)?;
                    LaneGraph::load(&text)?
                } else if library.ids().contains(&target.as_str()) {
                    let text = match target.as_str() {
                        "highway" => scenloop_core::map::HIGHWAY_TOML,
                        "curve" => scenloop_core::map::CURVE_TOML,
                        _ => scenloop_core::map::CROSSROAD_TOML,
                    };
                    LaneGraph::load(text)?
                } else {
                    return Err(CliError::data(format!(
                        "'{target}' is neither a file nor a builtin map id"
                    )));
                };
                println!("ok: {} lanes", graph.lanes().count());
                Ok(())
            }
        },
    }
}
