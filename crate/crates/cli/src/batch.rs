//! Batch runner: seeded episode grids over agent counts, SR/EL aggregation,
//! CSV/JSON result tables, replay files and hyperparameter sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use llmdr_core::episode::{run_episode, Analyst, AnalystMode, EpisodeMetrics, EpisodeOptions};
use llmdr_core::llm::{LlmAnalyst, LlmConfig, LlmTranscript, RateLimiter};
use llmdr_core::map::{parse_scenario, GridMap, ScenarioTask};
use llmdr_core::policy::PolicySpec;
use llmdr_core::replay::{task_to_record, write_replay, ReplayMeta};
use llmdr_core::episode::TrajectoryStep;

use crate::taskgen::{derive_seed, random_tasks, TaskGenError};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("map: {0}")]
    Map(#[from] llmdr_core::map::MapError),

    #[error("scenario: {0}")]
    Scenario(#[from] llmdr_core::map::ScenarioError),

    #[error("task generation: {0}")]
    TaskGen(#[from] TaskGenError),

    #[error("episode: {0}")]
    Episode(#[from] llmdr_core::episode::EpisodeError),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("sweep pair dwl={dwl} epl={epl} violates dwl <= epl")]
    InvalidSweepPair { dwl: usize, epl: usize },
}

/// Everything one batch needs. Tasks come from a scenario file prefix or the
/// seeded random generator, exactly one of the two.
#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub map_path: PathBuf,
    pub scen_path: Option<PathBuf>,
    pub random_task_seed: Option<u64>,
    pub agent_counts: Vec<usize>,
    pub episodes: usize,
    pub analyst: AnalystMode,
    pub llm: Option<LlmConfig>,
    pub llm_rps: f64,
    pub policy: PolicySpec,
    pub dwl: usize,
    pub epl: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub workers: usize,
}

impl BatchSpec {
    fn validate(&self) -> Result<(), BatchError> {
        if self.episodes == 0 {
            return Err(BatchError::InvalidSpec("episodes must be >= 1".into()));
        }
        if self.agent_counts.is_empty() || self.agent_counts.contains(&0) {
            return Err(BatchError::InvalidSpec(
                "agent counts must be non-empty and positive".into(),
            ));
        }
        match (&self.scen_path, self.random_task_seed) {
            (Some(_), Some(_)) => Err(BatchError::InvalidSpec(
                "choose either a scenario file or random tasks, not both".into(),
            )),
            (None, None) => Err(BatchError::InvalidSpec(
                "either a scenario file or a random task seed is required".into(),
            )),
            _ => Ok(()),
        }
    }

    fn options(&self) -> EpisodeOptions {
        EpisodeOptions {
            max_steps: self.max_steps,
            dwl: self.dwl,
            epl: self.epl,
        }
    }
}

/// One aggregated result cell.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ResultRow {
    pub map: String,
    pub agents: usize,
    pub analyst: String,
    pub dwl: usize,
    pub epl: usize,
    pub episodes: usize,
    pub success_rate: f64,
    pub avg_episode_length: f64,
    pub wall_time_s: f64,
}

/// Everything recorded about one episode, kept for replays and rechecks.
pub struct EpisodeRecord {
    pub agents: usize,
    pub episode: usize,
    pub tasks: Vec<ScenarioTask>,
    pub metrics: EpisodeMetrics,
    pub trajectory: Vec<TrajectoryStep>,
    pub transcripts: Vec<LlmTranscript>,
}

pub struct BatchOutput {
    pub rows: Vec<ResultRow>,
    pub records: Vec<EpisodeRecord>,
}

pub fn load_map(path: &Path) -> Result<GridMap, BatchError> {
    let text = fs::read_to_string(path).map_err(|source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "map".to_string());
    Ok(GridMap::parse(&text)?.with_name(name))
}

fn tasks_for_episode(
    spec: &BatchSpec,
    map: &GridMap,
    scen_text: Option<&str>,
    agents: usize,
    episode: usize,
) -> Result<Vec<ScenarioTask>, BatchError> {
    match (scen_text, spec.random_task_seed) {
        (Some(text), None) => Ok(parse_scenario(text, map, agents)?),
        (None, Some(task_seed)) => {
            Ok(random_tasks(map, agents, derive_seed(task_seed, agents, episode))?)
        }
        _ => unreachable!("validated"),
    }
}

fn run_one(
    spec: &BatchSpec,
    map: &GridMap,
    scen_text: Option<&str>,
    limiter: &Option<Arc<RateLimiter>>,
    agents: usize,
    episode: usize,
) -> Result<EpisodeRecord, BatchError> {
    let tasks = tasks_for_episode(spec, map, scen_text, agents, episode)?;
    let policy = spec.policy.build(derive_seed(spec.seed, agents, episode));
    let options = spec.options();

    let mut llm_client = match (spec.analyst, &spec.llm) {
        (AnalystMode::Llm, Some(config)) => {
            let mut client = LlmAnalyst::new(config.clone());
            if let Some(limiter) = limiter {
                client = client.with_rate_limiter(limiter.clone());
            }
            Some(client)
        }
        (AnalystMode::Llm, None) => {
            return Err(BatchError::InvalidSpec(
                "analyst=llm requires an endpoint configuration".into(),
            ))
        }
        _ => None,
    };
    let outcome = {
        let mut analyst = match (&mut llm_client, spec.analyst) {
            (Some(client), _) => Analyst::Llm(client),
            (None, AnalystMode::Rule) => Analyst::Rule,
            (None, _) => Analyst::Off,
        };
        run_episode(map, &tasks, &options, policy.as_ref(), &mut analyst)?
    };
    Ok(EpisodeRecord {
        agents,
        episode,
        tasks,
        metrics: outcome.metrics,
        trajectory: outcome.trajectory,
        transcripts: llm_client.map(|c| c.transcripts).unwrap_or_default(),
    })
}

/// Run every (agent count, episode) cell of `spec`. SR is the success
/// fraction; EL averages episode lengths with failures counted at max_steps.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchOutput, BatchError> {
    spec.validate()?;
    spec.options()
        .validate()
        .map_err(BatchError::Episode)?;
    let map = load_map(&spec.map_path)?;
    let scen_text = match &spec.scen_path {
        Some(p) => Some(fs::read_to_string(p).map_err(|source| BatchError::Io {
            path: p.clone(),
            source,
        })?),
        None => None,
    };
    let limiter = if spec.analyst == AnalystMode::Llm {
        Some(Arc::new(RateLimiter::new(spec.llm_rps)))
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut records: Vec<EpisodeRecord> = Vec::new();
    for &agents in &spec.agent_counts {
        let started = Instant::now();
        let mut cell_records = run_cell(spec, &map, scen_text.as_deref(), &limiter, agents)?;
        cell_records.sort_by_key(|r| r.episode);
        let wall_time_s = started.elapsed().as_secs_f64();

        let outcomes: Vec<(bool, usize)> = cell_records
            .iter()
            .map(|r| (r.metrics.success, r.metrics.episode_length))
            .collect();
        let (success_rate, avg_episode_length) = aggregate_sr_el(&outcomes);
        rows.push(ResultRow {
            map: map.name().to_string(),
            agents,
            analyst: spec.analyst.as_str().to_string(),
            dwl: spec.dwl,
            epl: spec.epl,
            episodes: spec.episodes,
            success_rate,
            avg_episode_length,
            wall_time_s,
        });
        records.extend(cell_records);
    }

    sort_rows(&mut rows);
    if let Some(dir) = &spec.out_dir {
        write_outputs(spec, &map, dir, &rows, &records)?;
    }
    Ok(BatchOutput { rows, records })
}

fn run_cell(
    spec: &BatchSpec,
    map: &GridMap,
    scen_text: Option<&str>,
    limiter: &Option<Arc<RateLimiter>>,
    agents: usize,
) -> Result<Vec<EpisodeRecord>, BatchError> {
    let workers = spec.workers.max(1).min(spec.episodes);
    if workers == 1 {
        return (0..spec.episodes)
            .map(|ep| run_one(spec, map, scen_text, limiter, agents, ep))
            .collect();
    }
    // Episode-level parallelism; aggregation is order-independent and the
    // caller sorts by episode index.
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..workers {
            let spec_ref = &*spec;
            let limiter_ref = &*limiter;
            handles.push(scope.spawn(move || -> Result<Vec<EpisodeRecord>, BatchError> {
                (worker..spec_ref.episodes)
                    .step_by(workers)
                    .map(|ep| run_one(spec_ref, map, scen_text, limiter_ref, agents, ep))
                    .collect()
            }));
        }
        let mut all = Vec::new();
        for handle in handles {
            all.extend(handle.join().expect("worker panicked")?);
        }
        Ok(all)
    })
}

/// SR is the fraction of successes; EL averages episode lengths, failed
/// episodes contributing their full step budget (their episode_length is
/// pinned to max_steps by the episode runner).
pub fn aggregate_sr_el(outcomes: &[(bool, usize)]) -> (f64, f64) {
    let n = outcomes.len().max(1);
    let successes = outcomes.iter().filter(|(s, _)| *s).count();
    let total: usize = outcomes.iter().map(|(_, l)| *l).sum();
    (successes as f64 / n as f64, total as f64 / n as f64)
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.map, a.agents, &a.analyst, a.dwl, a.epl)
            .cmp(&(&b.map, b.agents, &b.analyst, b.dwl, b.epl))
    });
}

/// Fixed CSV columns; wall time is deliberately left to the JSON mirror so
/// identical (spec, seed) runs produce byte-identical CSV.
pub const CSV_COLUMNS: [&str; 8] = [
    "map",
    "agents",
    "analyst",
    "dwl",
    "epl",
    "episodes",
    "success_rate",
    "avg_episode_length",
];

pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<(), BatchError> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(CSV_COLUMNS)?;
    for row in rows {
        writer.write_record([
            row.map.clone(),
            row.agents.to_string(),
            row.analyst.clone(),
            row.dwl.to_string(),
            row.epl.to_string(),
            row.episodes.to_string(),
            format!("{:.4}", row.success_rate),
            format!("{:.3}", row.avg_episode_length),
        ])?;
    }
    writer.flush().map_err(|e| BatchError::Io {
        path: PathBuf::from("<csv>"),
        source: e,
    })?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[ResultRow], mut w: W) -> Result<(), BatchError> {
    serde_json::to_writer_pretty(&mut w, rows).map_err(|e| BatchError::InvalidSpec(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| BatchError::Io {
        path: PathBuf::from("<json>"),
        source: e,
    })?;
    Ok(())
}

pub fn replay_file_name(map: &GridMap, spec: &BatchSpec, record: &EpisodeRecord) -> String {
    format!(
        "{}_{}_a{}_ep{}.jsonl",
        map.name(),
        spec.analyst.as_str(),
        record.agents,
        record.episode
    )
}

pub fn replay_meta(map: &GridMap, spec: &BatchSpec, record: &EpisodeRecord) -> ReplayMeta {
    ReplayMeta {
        map: map.name().to_string(),
        agents: record.agents,
        analyst: spec.analyst.as_str().to_string(),
        dwl: spec.dwl,
        epl: spec.epl,
        max_steps: spec.max_steps,
        seed: derive_seed(spec.seed, record.agents, record.episode),
        tasks: record.tasks.iter().map(task_to_record).collect(),
    }
}

fn write_outputs(
    spec: &BatchSpec,
    map: &GridMap,
    dir: &Path,
    rows: &[ResultRow],
    records: &[EpisodeRecord],
) -> Result<(), BatchError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source: std::io::Error| BatchError::Io { path, source }
    };

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("results.csv");
    let csv_file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(rows, std::io::BufWriter::new(csv_file))?;
    let json_path = dir.join("results.json");
    let json_file = fs::File::create(&json_path).map_err(io_err(&json_path))?;
    write_json(rows, std::io::BufWriter::new(json_file))?;

    let replays = dir.join("replays");
    fs::create_dir_all(&replays).map_err(io_err(&replays))?;
    for record in records {
        let path = replays.join(replay_file_name(map, spec, record));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_replay(
            std::io::BufWriter::new(file),
            &replay_meta(map, spec, record),
            &record.trajectory,
            &record.metrics,
        )
        .map_err(|e| BatchError::InvalidSpec(e.to_string()))?;
    }

    if let Some(path) = &spec.transcripts {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut out = std::io::BufWriter::new(file);
        for record in records {
            for transcript in &record.transcripts {
                serde_json::to_writer(&mut out, transcript)
                    .map_err(|e| BatchError::InvalidSpec(e.to_string()))?;
                out.write_all(b"\n").map_err(io_err(path))?;
            }
        }
    }
    Ok(())
}

/// Cartesian sweep over dwl x epl values; every pair must satisfy dwl <= epl.
/// Seeds are shared across cells so comparisons are paired.
pub fn sweep_hyperparams(
    spec: &BatchSpec,
    dwl_values: &[usize],
    epl_values: &[usize],
) -> Result<Vec<ResultRow>, BatchError> {
    for &dwl in dwl_values {
        for &epl in epl_values {
            if dwl > epl {
                return Err(BatchError::InvalidSweepPair { dwl, epl });
            }
        }
    }
    let mut rows = Vec::new();
    for &dwl in dwl_values {
        for &epl in epl_values {
            let mut cell_spec = spec.clone();
            cell_spec.dwl = dwl;
            cell_spec.epl = epl;
            cell_spec.out_dir = None;
            cell_spec.transcripts = None;
            rows.extend(run_batch(&cell_spec)?.rows);
        }
    }
    sort_rows(&mut rows);
    if let Some(dir) = &spec.out_dir {
        fs::create_dir_all(dir).map_err(|source| BatchError::Io {
            path: dir.clone(),
            source,
        })?;
        let csv_path = dir.join("results.csv");
        let csv_file = fs::File::create(&csv_path).map_err(|source| BatchError::Io {
            path: csv_path.clone(),
            source,
        })?;
        write_csv(&rows, std::io::BufWriter::new(csv_file))?;
        let json_path = dir.join("results.json");
        let json_file = fs::File::create(&json_path).map_err(|source| BatchError::Io {
            path: json_path.clone(),
            source,
        })?;
        write_json(&rows, std::io::BufWriter::new(json_file))?;
    }
    Ok(rows)
}
