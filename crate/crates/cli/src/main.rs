use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use expmem::embedding::{Embedder, LocalEmbedder, RemoteEmbedder};
use expmem::memory::{MemoryError, MemoryStore};
use expmem::orchestrator::{
    build_reference_store, read_log, replay, run_suite, seed_fillers, write_log, Backends, Episode, EpisodeConfig,
    EpisodeLog, MemoryMode, OrchestratorError, SuitePreset,
};
use expmem::remote::{BackendError, ReqwestTransport, API_KEY_ENV, BASE_URL_ENV, DEFAULT_BASE_URL};
use expmem::vlm::{Policy, RemoteVlm, RetrievalMode, ScriptedVlm, VlmBackend};
use expmem::world::{Scenario, BUILTIN_SCENARIO_NAMES};

#[derive(Parser)]
#[command(name = "expmem", version, about = "Run memory-grounded tabletop episodes, suites and replays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and print its transcript.
    Run(RunArgs),
    /// Run a preset suite and print its results table.
    Suite(SuiteArgs),
    /// Inspect or extend a memory store.
    Memory(MemoryArgs),
    /// Re-execute a logged episode and check it reproduces.
    Replay(ReplayArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendChoice {
    ScriptedNaive,
    ScriptedReflective,
    ScriptedMemoryAware,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedderChoice {
    Local,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MemoryChoice {
    None,
    Stm,
    #[value(name = "stm+ltm")]
    StmLtm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RetrievalChoice {
    Rag,
    Random,
    All,
    None,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetChoice {
    Stm,
    Ltm,
    Ablation,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted-reflective")]
    backend: BackendChoice,
    /// Chat model for the remote backend.
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    #[arg(long, value_enum, default_value = "local")]
    embedder: EmbedderChoice,
    /// Embedding model for the remote embedder.
    #[arg(long, default_value = "text-embedding-3-small")]
    embedding_model: String,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario name or path to a scenario TOML file.
    #[arg(long)]
    scenario: String,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, value_enum, default_value = "stm")]
    memory: MemoryChoice,
    #[arg(long, value_enum, default_value = "rag")]
    retrieval: RetrievalChoice,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    context_cap: usize,
    #[arg(long, default_value_t = 12)]
    max_steps: usize,
    /// Override the scenario's attempt budget.
    #[arg(long)]
    attempts: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Memory store (required with --memory stm+ltm).
    #[arg(long)]
    store: Option<PathBuf>,
    /// Summarize a completed episode into the store and save it.
    #[arg(long)]
    write_back: bool,
    /// Directory for the episode log and transcript.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pause after each step for an operator note.
    #[arg(long)]
    interactive: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, value_enum)]
    suite: PresetChoice,
    #[command(flatten)]
    backend: BackendArgs,
    /// Store for long-term suites; built from the short-term scenarios when omitted.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    context_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trials per cell; defaults to the preset's own count.
    #[arg(long)]
    trials: Option<usize>,
    /// Directory for the text and JSON tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MemoryArgs {
    #[arg(long)]
    store: PathBuf,
    #[command(subcommand)]
    command: MemoryCommand,
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// One line per record: id, instruction, start of the summary.
    Ls,
    /// Print one record as JSON.
    Show { id: u64 },
    /// Copy the store to another file.
    Export { path: PathBuf },
    /// Append synthetic simple-task records, creating the store if needed.
    SeedFillers {
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the 100-record reference store used by the long-term suites.
    BuildReference {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Scenario to replay against; defaults to the built-in named in the log.
    #[arg(long)]
    scenario: Option<String>,
}

/// Error carrying the process exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        let code = match &e {
            OrchestratorError::Backend(_) => 3,
            OrchestratorError::Divergence { .. } => 4,
            _ => 2,
        };
        Failure { code, error: e.into() }
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        Failure { code: 3, error: e.into() }
    }
}

impl From<MemoryError> for Failure {
    fn from(e: MemoryError) -> Self {
        usage(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        usage(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        usage(e)
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Memory(a) => cmd_memory(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Scenarios => cmd_scenarios(),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_scenario(spec: &str) -> Result<Scenario, Failure> {
    let path = Path::new(spec);
    if path.exists() {
        return Scenario::load(path).map_err(|e| usage(anyhow!("{spec}: {e}")));
    }
    Scenario::builtin(spec).ok_or_else(|| usage(anyhow!("no scenario file or built-in scenario named {spec:?}")))
}

fn load_store(path: &Path) -> Result<MemoryStore, Failure> {
    if !path.exists() {
        return Err(usage(anyhow!("memory store {} does not exist", path.display())));
    }
    MemoryStore::load(path).map_err(|e| usage(anyhow!("{}: {e}", path.display())))
}

fn remote_settings() -> Result<(Arc<ReqwestTransport>, String, String), Failure> {
    let key = std::env::var(API_KEY_ENV).map_err(|_| usage(anyhow!("{API_KEY_ENV} must be set for remote backends")))?;
    let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
    Ok((Arc::new(ReqwestTransport::new()?), base, key))
}

fn make_embedder(args: &BackendArgs) -> Result<Box<dyn Embedder>, Failure> {
    Ok(match args.embedder {
        EmbedderChoice::Local => Box::new(LocalEmbedder::default()),
        EmbedderChoice::Remote => {
            let (t, base, key) = remote_settings()?;
            Box::new(RemoteEmbedder::new(t, base, args.embedding_model.clone(), Some(key)))
        }
    })
}

fn policy_of(choice: BackendChoice) -> Option<Policy> {
    match choice {
        BackendChoice::ScriptedNaive => Some(Policy::Naive),
        BackendChoice::ScriptedReflective => Some(Policy::Reflective),
        BackendChoice::ScriptedMemoryAware => Some(Policy::MemoryAware),
        BackendChoice::Remote => None,
    }
}

/// Backend factory: scripted backends follow the requested policy, the
/// remote one ignores it.
fn vlm_factory(args: &BackendArgs) -> Result<Box<dyn Fn(Policy) -> Box<dyn VlmBackend>>, Failure> {
    if args.backend != BackendChoice::Remote {
        return Ok(Box::new(|p| Box::new(ScriptedVlm::new(p)) as Box<dyn VlmBackend>));
    }
    let (t, base, key) = remote_settings()?;
    let model = args.model.clone();
    Ok(Box::new(move |_| {
        Box::new(RemoteVlm::new(t.clone(), base.clone(), model.clone(), Some(key.clone()))) as Box<dyn VlmBackend>
    }))
}

fn prompt_note() -> io::Result<Option<String>> {
    print!("operator note (empty to continue): ");
    io::stdout().flush()?;
    let mut line = String::new();
    io::stdin().lock().read_line(&mut line)?;
    let line = line.trim();
    Ok((!line.is_empty()).then(|| line.to_string()))
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let scenario = load_scenario(&a.scenario)?;
    let memory_mode = match a.memory {
        MemoryChoice::None => MemoryMode::None,
        MemoryChoice::Stm => MemoryMode::StmOnly,
        MemoryChoice::StmLtm => MemoryMode::StmAndLtm,
    };
    let retrieval_mode = match a.retrieval {
        RetrievalChoice::Rag => RetrievalMode::Rag,
        RetrievalChoice::Random => RetrievalMode::RandomK,
        RetrievalChoice::All => RetrievalMode::All,
        RetrievalChoice::None => RetrievalMode::None,
    };
    let config = EpisodeConfig {
        memory_mode,
        retrieval_mode,
        k: a.k,
        context_cap: a.context_cap,
        max_steps: a.max_steps,
        attempts_allowed: a.attempts,
        seed: a.seed,
        write_back: a.write_back,
    };
    config.validate()?;
    if a.write_back && memory_mode != MemoryMode::StmAndLtm {
        return Err(usage(anyhow!("--write-back needs --memory stm+ltm")));
    }
    let mut store = match (memory_mode, &a.store) {
        (MemoryMode::StmAndLtm, Some(p)) => Some(load_store(p)?),
        (MemoryMode::StmAndLtm, None) => return Err(usage(anyhow!("--memory stm+ltm needs --store"))),
        _ => None,
    };
    let factory = vlm_factory(&a.backend)?;
    let vlm = factory(policy_of(a.backend.backend).unwrap_or(Policy::Reflective));
    let embedder = make_embedder(&a.backend)?;
    let backends = Backends { vlm: vlm.as_ref(), embedder: embedder.as_ref() };

    println!("scenario {}: {}", scenario.name, scenario.instruction);
    let mut ep = Episode::new(&scenario, config.clone(), store.as_mut(), backends)?;
    if !ep.context().entries.is_empty() {
        let ids: Vec<String> = ep.context().entries.iter().map(|e| e.record_id.to_string()).collect();
        println!("retrieved memories: {}", ids.join(", "));
    }
    while !ep.is_finished() {
        let s = ep.step()?;
        println!(
            "step {}: {} -> {} / {}{}",
            s.step,
            s.action,
            s.effect.kind.as_str(),
            s.feedback.status.as_str(),
            if s.feedback.failure_cause.is_empty() { String::new() } else { format!(" ({})", s.feedback.failure_cause) }
        );
        if a.interactive && !ep.is_finished() {
            if let Some(note) = prompt_note()? {
                ep.inject_operator_note(&note)?;
            }
        }
    }
    let result = ep.finish()?;
    print!("{}", result.transcript());
    println!("short-term memory:\n{}", result.stm.render());
    if let Some(summary) = &result.summary {
        println!("stored experience #{}: {summary}", result.record_id.unwrap_or_default());
    }
    if let (Some(store), Some(path)) = (&store, &a.store) {
        if result.record_id.is_some() {
            store.save(path)?;
        }
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let log = EpisodeLog::new(&scenario, &config, vlm.name(), &result);
        write_log(BufWriter::new(File::create(dir.join("episode.ndjson"))?), &log)?;
        fs::write(dir.join("transcript.txt"), result.transcript())?;
    }
    Ok(if result.completed { 0 } else { 1 })
}

fn cmd_suite(a: SuiteArgs) -> CmdResult {
    let preset = match a.suite {
        PresetChoice::Stm => SuitePreset::Stm,
        PresetChoice::Ltm => SuitePreset::Ltm,
        PresetChoice::Ablation => SuitePreset::Ablation,
    };
    let factory = vlm_factory(&a.backend)?;
    let embedder = make_embedder(&a.backend)?;
    let store = match (&a.store, preset.needs_store()) {
        (Some(p), true) => Some(load_store(p)?),
        (None, true) => Some(build_reference_store(factory.as_ref(), embedder.as_ref(), a.seed)?),
        _ => None,
    };
    let base = EpisodeConfig { k: a.k, context_cap: a.context_cap, seed: a.seed, ..Default::default() };
    let table = run_suite(
        preset.title(),
        &preset.scenarios(),
        &preset.conditions(&base),
        a.trials.unwrap_or_else(|| preset.trials()),
        store.as_ref(),
        factory.as_ref(),
        embedder.as_ref(),
    )?;
    print!("{}", table.render());
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(format!("{preset}.txt")), table.render())?;
        let json = serde_json::to_string_pretty(&table).context("serializing table")?;
        fs::write(dir.join(format!("{preset}.json")), json + "\n")?;
    }
    Ok(0)
}

fn excerpt(s: &str, n: usize) -> String {
    match s.char_indices().nth(n) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

fn cmd_memory(a: MemoryArgs) -> CmdResult {
    match a.command {
        MemoryCommand::Ls => {
            let store = load_store(&a.store)?;
            for r in store.records() {
                println!("{:>4}  {:<40}  {}", r.id, r.key.instruction, excerpt(&r.summary, 60));
            }
        }
        MemoryCommand::Show { id } => {
            let store = load_store(&a.store)?;
            let r = store.get(id).ok_or_else(|| usage(anyhow!("no record with id {id}")))?;
            let json = serde_json::to_string_pretty(r).context("serializing record")?;
            println!("{json}");
        }
        MemoryCommand::Export { path } => {
            let store = load_store(&a.store)?;
            store.save(&path)?;
            println!("exported {} records to {}", store.len(), path.display());
        }
        MemoryCommand::SeedFillers { n, seed } => {
            let mut store = if a.store.exists() { load_store(&a.store)? } else { MemoryStore::new() };
            let ids = seed_fillers(&mut store, &LocalEmbedder::default(), n, seed)?;
            store.save(&a.store)?;
            println!("added {} records; store now holds {}", ids.len(), store.len());
        }
        MemoryCommand::BuildReference { seed } => {
            let factory = |p| Box::new(ScriptedVlm::new(p)) as Box<dyn VlmBackend>;
            let store = build_reference_store(&factory, &LocalEmbedder::default(), seed)?;
            store.save(&a.store)?;
            println!("wrote {} records to {}", store.len(), a.store.display());
        }
    }
    Ok(0)
}

fn cmd_replay(a: ReplayArgs) -> CmdResult {
    let file = File::open(&a.log).map_err(|e| usage(anyhow!("{}: {e}", a.log.display())))?;
    let log = read_log(BufReader::new(file))?;
    let scenario = load_scenario(a.scenario.as_deref().unwrap_or(&log.header.scenario))?;
    let report = replay(&log, &scenario)?;
    println!("{}: {} step(s) reproduced", report.scenario, report.steps_checked);
    Ok(0)
}

fn cmd_scenarios() -> CmdResult {
    for name in BUILTIN_SCENARIO_NAMES {
        let s = Scenario::builtin(name).expect("built in");
        println!("{name:<22} {:<28} {}", s.trap.as_str(), s.instruction);
    }
    Ok(0)
}
