use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use llmdr_cli::batch::{run_batch, sweep_hyperparams, BatchSpec, ResultRow};
use llmdr_cli::validate::validate_replay_file;
use llmdr_core::episode::{AnalystMode, DEFAULT_DWL, DEFAULT_EPL, DEFAULT_MAX_STEPS};
use llmdr_core::llm::{LlmConfig, API_KEY_ENV};
use llmdr_core::policy::PolicySpec;

#[derive(Parser)]
#[command(
    name = "llmdr",
    version,
    about = "Multi-agent pathfinding benchmark harness with deadlock detection and resolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of episodes over one or more agent counts.
    Run(RunArgs),
    /// Sweep detection-window and execution-plan lengths over a batch.
    Sweep(SweepArgs),
    /// Re-check a replay file for conflicts and consistency.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AnalystArg {
    Off,
    Rule,
    Llm,
}

impl From<AnalystArg> for AnalystMode {
    fn from(a: AnalystArg) -> Self {
        match a {
            AnalystArg::Off => AnalystMode::Off,
            AnalystArg::Rule => AnalystMode::Rule,
            AnalystArg::Llm => AnalystMode::Llm,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// MovingAI .map file.
    #[arg(long)]
    map: PathBuf,

    /// MovingAI .scen file; tasks are its first N entries.
    #[arg(long, conflicts_with = "random_tasks")]
    scen: Option<PathBuf>,

    /// Generate seeded random tasks instead of reading a scenario file.
    #[arg(long, value_name = "SEED")]
    random_tasks: Option<u64>,

    /// Agent counts, comma separated (e.g. 4,8,16).
    #[arg(long, value_delimiter = ',', default_value = "4")]
    agents: Vec<usize>,

    /// Episodes per agent count.
    #[arg(long, default_value_t = 1)]
    episodes: usize,

    #[arg(long, value_enum, default_value_t = AnalystArg::Rule)]
    analyst: AnalystArg,

    /// Detection window length.
    #[arg(long, default_value_t = DEFAULT_DWL)]
    dwl: usize,

    /// Execution plan length.
    #[arg(long, default_value_t = DEFAULT_EPL)]
    epl: usize,

    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,

    /// Base seed; per-episode seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory for results.csv, results.json and replays/.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Base policy: greedy or greedy-noisy:<p>.
    #[arg(long, default_value = "greedy")]
    policy: String,

    /// Chat-completions base URL (required with --analyst llm).
    #[arg(long)]
    llm_endpoint: Option<String>,

    #[arg(long, default_value = "gpt-4o")]
    llm_model: String,

    /// Request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    llm_timeout: u64,

    #[arg(long, default_value_t = 2)]
    llm_retries: u32,

    #[arg(long, default_value_t = 0.0)]
    llm_temperature: f64,

    /// Global analyst rate limit, requests per second.
    #[arg(long, default_value_t = 4.0)]
    llm_rps: f64,

    /// Write analyst transcripts (JSON lines) to this path.
    #[arg(long)]
    transcripts: Option<PathBuf>,

    /// Episode-level parallelism.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Detection window lengths to sweep, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    dwl_values: Vec<usize>,

    /// Execution plan lengths to sweep, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    epl_values: Vec<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Replay file written by `run` (replays/*.jsonl).
    #[arg(long)]
    replay: PathBuf,

    /// Map the replay was recorded on.
    #[arg(long)]
    map: PathBuf,
}

fn build_spec(args: &RunArgs) -> Result<BatchSpec> {
    let policy: PolicySpec = args
        .policy
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let analyst: AnalystMode = args.analyst.into();
    let llm = match analyst {
        AnalystMode::Llm => {
            let endpoint = args
                .llm_endpoint
                .clone()
                .with_context(|| "--analyst llm requires --llm-endpoint")?;
            let mut config = LlmConfig::new(endpoint, args.llm_model.clone());
            config.timeout = Duration::from_secs(args.llm_timeout);
            config.max_retries = args.llm_retries;
            config.temperature = args.llm_temperature;
            if config.api_key.is_none() {
                eprintln!("note: {API_KEY_ENV} is not set; requests go out without a bearer token");
            }
            Some(config)
        }
        _ => None,
    };
    if args.scen.is_none() && args.random_tasks.is_none() {
        bail!("either --scen or --random-tasks is required");
    }
    Ok(BatchSpec {
        map_path: args.map.clone(),
        scen_path: args.scen.clone(),
        random_task_seed: args.random_tasks,
        agent_counts: args.agents.clone(),
        episodes: args.episodes,
        analyst,
        llm,
        llm_rps: args.llm_rps,
        policy,
        dwl: args.dwl,
        epl: args.epl,
        max_steps: args.max_steps,
        seed: args.seed,
        out_dir: args.out.clone(),
        transcripts: args.transcripts.clone(),
        workers: args.workers,
    })
}

fn print_rows(rows: &[ResultRow]) {
    println!(
        "{:<16} {:>6} {:>7} {:>4} {:>4} {:>9} {:>8} {:>10} {:>9}",
        "map", "agents", "analyst", "dwl", "epl", "episodes", "SR", "EL", "wall(s)"
    );
    for r in rows {
        println!(
            "{:<16} {:>6} {:>7} {:>4} {:>4} {:>9} {:>8.4} {:>10.3} {:>9.2}",
            r.map, r.agents, r.analyst, r.dwl, r.epl, r.episodes, r.success_rate,
            r.avg_episode_length, r.wall_time_s
        );
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let spec = build_spec(&args)?;
            let output = run_batch(&spec)?;
            print_rows(&output.rows);
            if let Some(dir) = &spec.out_dir {
                eprintln!("wrote {}", dir.display());
            }
        }
        Command::Sweep(args) => {
            let spec = build_spec(&args.run)?;
            let rows = sweep_hyperparams(&spec, &args.dwl_values, &args.epl_values)?;
            print_rows(&rows);
            if let Some(dir) = &spec.out_dir {
                eprintln!("wrote {}", dir.display());
            }
        }
        Command::Validate(args) => {
            let map = llmdr_cli::load_map(&args.map)?;
            let (replay, violations) = validate_replay_file(&args.replay, &map, None)?;
            if violations.is_empty() {
                println!(
                    "ok: {} steps, success={}, episode_length={}",
                    replay.steps.len(),
                    replay.summary.success,
                    replay.summary.episode_length
                );
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                bail!("{} violation(s) found", violations.len());
            }
        }
    }
    Ok(())
}
