//! Acceptance suite. One test per criterion; each prints a PASS line with its
//! measured numbers (visible under `--nocapture`).
//!
//! Run with: `cargo test -p llmdr-cli --test acceptance -- --nocapture`

mod corpus;
mod helpers;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use llmdr_cli::batch::{aggregate_sr_el, run_batch, sweep_hyperparams, BatchSpec};
use llmdr_cli::validate::{validate_replay, validate_replay_file};
use llmdr_core::analysis::{analyze_rule_based, ReportSource, Solution};
use llmdr_core::episode::{
    run_episode, Analyst, AnalystMode, EpisodeOptions, EpisodeOutcome, DEFAULT_DWL, DEFAULT_EPL,
};
use llmdr_core::llm::{LlmAnalyst, LlmConfig};
use llmdr_core::map::{Action, Cell, GridMap, ScenarioTask};
use llmdr_core::mockchat::{refused_endpoint, MockChatServer, Scripted};
use llmdr_core::pibt::{pibt_step, verify_joint_move};
use llmdr_core::policy::{ActionRanking, GreedyPolicy, JointState, PolicySpec};
use llmdr_core::replay::{read_replay, task_to_record, write_replay, ReplayMeta};
use llmdr_core::{build_distance_field, DetectionWindow, DistanceField};

use corpus::{corpus, CorpusInstance};
use helpers::{random_map, write_map};

// ---------------------------------------------------------------------------
// Criterion 1: PIBT safety fuzz.
// ---------------------------------------------------------------------------

#[test]
fn c1_pibt_safety_fuzz() {
    let started = Instant::now();
    let instances = 500;
    let steps_per_instance = 256;
    let mut total_steps = 0u64;

    for instance in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF0F0 + instance as u64);
        let width = rng.random_range(6..=32);
        let height = rng.random_range(6..=32);
        let density = rng.random_range(0.10..=0.25);
        let map = random_map(rng.random(), width, height, density);
        let passable: Vec<Cell> = map.passable_cells().collect();
        let n = rng
            .random_range(4..=64usize)
            .min(passable.len());

        let mut cells = passable.clone();
        for i in 0..n {
            let j = rng.random_range(i..cells.len());
            cells.swap(i, j);
        }
        let positions: Vec<Cell> = cells[..n].to_vec();
        let goals: Vec<Cell> = (0..n)
            .map(|_| passable[rng.random_range(0..passable.len())])
            .collect();
        let mut state = JointState::new(positions, goals, 0, &map).unwrap();

        for _ in 0..steps_per_instance {
            let rankings: Vec<ActionRanking> = (0..n)
                .map(|_| {
                    let mut actions = Action::ALL;
                    for i in 0..5 {
                        let j = rng.random_range(i..5);
                        actions.swap(i, j);
                    }
                    ActionRanking::new(actions)
                })
                .collect();
            let mut priorities: Vec<usize> = (0..n).collect();
            for i in 0..n {
                let j = rng.random_range(i..n);
                priorities.swap(i, j);
            }

            let out = pibt_step(&state, &rankings, &priorities, &map);
            let conflicts = verify_joint_move(&state, &map, &out.moves);
            assert!(
                conflicts.is_empty(),
                "instance {instance}: conflicts {conflicts:?}"
            );
            assert!(
                out.fallback_agents.is_empty(),
                "instance {instance}: engine anomaly {:?}",
                out.fallback_agents
            );
            state = JointState::new(
                out.moves.targets(&state.positions),
                state.goals.clone(),
                state.step + 1,
                &map,
            )
            .expect("collision-free move must produce a valid state");
            total_steps += 1;
        }
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(120),
        "fuzz took {elapsed:?}, budget is 2 minutes"
    );
    println!(
        "ACCEPTANCE 1 (pibt safety fuzz): PASS: {instances} instances, {total_steps} steps, zero conflicts, {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: rule analyst vs brute-force oracle.
// ---------------------------------------------------------------------------

#[test]
fn c2_analyst_oracle_equivalence() {
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 1000 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(0xACE0 + seed);
        let map = random_map(rng.random(), 16, 16, 0.18);
        let passable: Vec<Cell> = map.passable_cells().collect();
        let n = rng.random_range(2..=10usize).min(passable.len());
        let dwl = rng.random_range(2..=6);

        // Random goals and random walks (stay-biased so deadlocks appear);
        // some agents are clamped onto their goals to produce Arrived rows.
        let goals: Vec<Cell> = (0..n)
            .map(|_| passable[rng.random_range(0..passable.len())])
            .collect();
        let mut window_positions: Vec<Vec<Cell>> = Vec::with_capacity(n);
        for &goal in &goals {
            if rng.random_bool(0.2) {
                window_positions.push(vec![goal; dwl]);
                continue;
            }
            let mut pos = passable[rng.random_range(0..passable.len())];
            let mut walk = vec![pos];
            for _ in 1..dwl {
                if rng.random_bool(0.5) {
                    let neighbors = map.neighbors(pos).unwrap();
                    if !neighbors.is_empty() {
                        pos = neighbors[rng.random_range(0..neighbors.len())];
                    }
                }
                walk.push(pos);
            }
            window_positions.push(walk);
        }

        let fields: Vec<DistanceField> = goals
            .iter()
            .map(|&g| build_distance_field(&map, g).unwrap())
            .collect();
        let steps: Vec<Vec<Cell>> = (0..dwl)
            .map(|t| (0..n).map(|a| window_positions[a][t]).collect())
            .collect();
        let window = DetectionWindow::new(&steps, &goals).unwrap();

        // Alternate between the full agent set and a random subset.
        let inspected: BTreeSet<usize> = if seed.is_multiple_of(2) {
            (0..n).collect()
        } else {
            (0..n).filter(|_| rng.random_bool(0.7)).collect()
        };
        if inspected.is_empty() {
            continue;
        }

        let report = analyze_rule_based(&window, &fields, &inspected);
        let mut got: Vec<(BTreeSet<usize>, Solution)> = report
            .groups
            .iter()
            .map(|g| (g.agent_ids.clone(), g.solution))
            .collect();
        got.sort();
        let expected = oracle::oracle_groups(&window_positions, &goals, &fields, &inspected);
        assert_eq!(got, expected, "window seed {seed}");
        checked += 1;
    }
    assert!(checked >= 1000, "only {checked} windows checked");
    println!("ACCEPTANCE 2 (analyst oracle equivalence): PASS: {checked} windows, exact match");
}

// ---------------------------------------------------------------------------
// Criteria 3 and 8 share the corpus runs; criterion 4 and 8 share the scale
// runs.
// ---------------------------------------------------------------------------

struct CorpusRun {
    name: &'static str,
    analyst: AnalystMode,
    outcome: EpisodeOutcome,
    tasks: Vec<ScenarioTask>,
    map: GridMap,
}

fn corpus_runs() -> &'static Vec<CorpusRun> {
    static RUNS: OnceLock<Vec<CorpusRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let options = EpisodeOptions {
            max_steps: 256,
            dwl: 4,
            epl: 16,
        };
        let mut runs = Vec::new();
        for instance in corpus() {
            let CorpusInstance {
                name, map, tasks, ..
            } = instance;
            for analyst_mode in [AnalystMode::Off, AnalystMode::Rule] {
                let mut analyst = match analyst_mode {
                    AnalystMode::Off => Analyst::Off,
                    AnalystMode::Rule => Analyst::Rule,
                    AnalystMode::Llm => unreachable!(),
                };
                let outcome =
                    run_episode(&map, &tasks, &options, &GreedyPolicy, &mut analyst)
                        .expect("corpus episode must run");
                runs.push(CorpusRun {
                    name,
                    analyst: analyst_mode,
                    outcome,
                    tasks: tasks.clone(),
                    map: map.clone(),
                });
            }
        }
        runs
    })
}

#[test]
fn c3_deadlock_resolution_corpus() {
    let runs = corpus_runs();
    let expectations: Vec<(&str, bool)> = corpus()
        .iter()
        .map(|i| (i.name, i.expected_rule_success))
        .collect();

    let mut rule_successes = 0;
    let mut mismatches = Vec::new();
    for (name, expected_rule) in &expectations {
        let off = runs
            .iter()
            .find(|r| r.name == *name && r.analyst == AnalystMode::Off)
            .unwrap();
        let rule = runs
            .iter()
            .find(|r| r.name == *name && r.analyst == AnalystMode::Rule)
            .unwrap();
        println!(
            "  {name}: off={} ({}) rule={} ({} steps, {} reports)",
            if off.outcome.metrics.success { "success" } else { "fail" },
            off.outcome.metrics.episode_length,
            if rule.outcome.metrics.success { "success" } else { "fail" },
            rule.outcome.metrics.episode_length,
            rule.outcome.metrics.deadlock_reports,
        );
        if off.outcome.metrics.success {
            mismatches.push(format!("{name}: control arm unexpectedly succeeded"));
        }
        if off.outcome.metrics.episode_length != 256 {
            mismatches.push(format!("{name}: failed control arm not pinned to max_steps"));
        }
        if rule.outcome.metrics.success != *expected_rule {
            mismatches.push(format!(
                "{name}: rule outcome {} deviates from the frozen expectation {}",
                rule.outcome.metrics.success, expected_rule
            ));
        }
        if rule.outcome.metrics.success {
            rule_successes += 1;
        }
    }
    assert!(mismatches.is_empty(), "corpus deviations: {mismatches:#?}");

    let total = expectations.len();
    assert!(total >= 10, "corpus must hold at least 10 instances");
    assert!(
        rule_successes * 10 >= total * 8,
        "rule analyst resolved {rule_successes}/{total}, below the 8-of-10 floor"
    );
    println!(
        "ACCEPTANCE 3 (deadlock-resolution corpus): PASS: off SR 0/{total}, rule {rule_successes}/{total}"
    );
}

struct ScaleRuns {
    dir: tempfile::TempDir,
    map_path: PathBuf,
    off_rows: Vec<llmdr_cli::ResultRow>,
    rule_rows: Vec<llmdr_cli::ResultRow>,
}

fn scale_spec(map_path: PathBuf, analyst: AnalystMode, out: Option<PathBuf>) -> BatchSpec {
    BatchSpec {
        map_path,
        scen_path: None,
        random_task_seed: Some(1),
        agent_counts: vec![16, 32, 64],
        episodes: 100,
        analyst,
        llm: None,
        llm_rps: 4.0,
        policy: PolicySpec::Greedy,
        dwl: 4,
        epl: 16,
        max_steps: 256,
        seed: 0xD00D,
        out_dir: out,
        transcripts: None,
        workers: std::thread::available_parallelism()
            .map(|n| n.get().min(8))
            .unwrap_or(4),
    }
}

fn scale_runs() -> &'static ScaleRuns {
    static RUNS: OnceLock<ScaleRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let map = random_map(37, 32, 32, 0.10);
        let map_path = write_map(dir.path(), "random32.map", &map);
        let off = run_batch(&scale_spec(
            map_path.clone(),
            AnalystMode::Off,
            Some(dir.path().join("off")),
        ))
        .unwrap();
        let rule = run_batch(&scale_spec(
            map_path.clone(),
            AnalystMode::Rule,
            Some(dir.path().join("rule")),
        ))
        .unwrap();
        ScaleRuns {
            dir,
            map_path,
            off_rows: off.rows,
            rule_rows: rule.rows,
        }
    })
}

#[test]
fn c4_direction_of_effect_at_scale() {
    let started = Instant::now();
    let runs = scale_runs();
    let sr = |rows: &[llmdr_cli::ResultRow], agents: usize| {
        rows.iter()
            .find(|r| r.agents == agents)
            .map(|r| r.success_rate)
            .unwrap()
    };
    let mut gaps = Vec::new();
    for agents in [16, 32, 64] {
        let off = sr(&runs.off_rows, agents);
        let rule = sr(&runs.rule_rows, agents);
        println!("  agents {agents}: SR off {off:.2} rule {rule:.2}");
        assert!(
            rule >= off,
            "agents {agents}: rule SR {rule} below control {off}"
        );
        gaps.push(rule - off);
    }
    assert!(
        gaps[2] >= gaps[0],
        "SR gap must not shrink from 16 agents ({:.3}) to 64 ({:.3})",
        gaps[0],
        gaps[2]
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(600),
        "scale comparison took {elapsed:?}, budget is 10 minutes"
    );
    println!(
        "ACCEPTANCE 4 (direction of effect at scale): PASS: gaps {:.3}/{:.3}/{:.3}, {elapsed:?}",
        gaps[0], gaps[1], gaps[2]
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: defaults and sweep plumbing.
// ---------------------------------------------------------------------------

#[test]
fn c5_defaults_and_sweep_grid() {
    assert_eq!(DEFAULT_DWL, 4);
    assert_eq!(DEFAULT_EPL, 16);
    let defaults = EpisodeOptions::default();
    assert_eq!((defaults.dwl, defaults.epl), (4, 16));

    let dir = tempfile::tempdir().unwrap();
    let map = random_map(5, 10, 10, 0.10);
    let map_path = write_map(dir.path(), "sweep.map", &map);
    let spec = BatchSpec {
        map_path: map_path.clone(),
        scen_path: None,
        random_task_seed: Some(1),
        agent_counts: vec![2],
        episodes: 1,
        analyst: AnalystMode::Rule,
        llm: None,
        llm_rps: 4.0,
        policy: PolicySpec::Greedy,
        dwl: DEFAULT_DWL,
        epl: DEFAULT_EPL,
        max_steps: 128,
        seed: 9,
        out_dir: None,
        transcripts: None,
        workers: 1,
    };

    // The two panels of the hyperparameter grid: detection window lengths at
    // the default plan length, then plan lengths at the default window.
    let panel_dwl = sweep_hyperparams(&spec, &[2, 4, 8], &[DEFAULT_EPL]).unwrap();
    let panel_epl = sweep_hyperparams(&spec, &[DEFAULT_DWL], &[8, 16, 32]).unwrap();
    let mut configured: Vec<(usize, usize)> = panel_dwl
        .iter()
        .chain(panel_epl.iter())
        .map(|r| (r.dwl, r.epl))
        .collect();
    assert_eq!(configured.len(), 6, "two panels of three rows each");
    configured.sort();
    assert_eq!(
        configured,
        vec![(2, 16), (4, 8), (4, 16), (4, 16), (4, 32), (8, 16)]
    );

    // Invalid pair rejected.
    assert!(sweep_hyperparams(&spec, &[8], &[4]).is_err());

    // The CLI drives the same path end to end, with its documented defaults.
    let out = dir.path().join("cli_run");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_llmdr"))
        .args([
            "run",
            "--map",
            map_path.to_str().unwrap(),
            "--random-tasks",
            "1",
            "--agents",
            "2",
            "--episodes",
            "1",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .expect("run the llmdr binary");
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[3], "4", "default dwl in CLI output");
    assert_eq!(fields[4], "16", "default epl in CLI output");

    let sweep_out = dir.path().join("cli_sweep");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_llmdr"))
        .args([
            "sweep",
            "--map",
            map_path.to_str().unwrap(),
            "--random-tasks",
            "1",
            "--agents",
            "2",
            "--episodes",
            "1",
            "--seed",
            "9",
            "--dwl-values",
            "2,4,8",
            "--epl-values",
            "16",
            "--out",
            sweep_out.to_str().unwrap(),
        ])
        .status()
        .expect("run the llmdr binary");
    assert!(status.success());
    let csv = std::fs::read_to_string(sweep_out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus one row per dwl value");

    let status = std::process::Command::new(env!("CARGO_BIN_EXE_llmdr"))
        .args([
            "sweep",
            "--map",
            map_path.to_str().unwrap(),
            "--random-tasks",
            "1",
            "--agents",
            "2",
            "--episodes",
            "1",
            "--dwl-values",
            "8",
            "--epl-values",
            "4",
        ])
        .status()
        .expect("run the llmdr binary");
    assert!(!status.success(), "dwl 8 / epl 4 must be rejected");

    println!("ACCEPTANCE 5 (defaults + sweep grid): PASS: dwl/epl defaults 4/16, 6-row grid, invalid pair rejected");
}

// ---------------------------------------------------------------------------
// Criterion 6: EL averaging rule.
// ---------------------------------------------------------------------------

#[test]
fn c6_metrics_rule() {
    // The documented aggregation path: one success at 50 steps and one
    // failure at max 256 average to SR 0.5 and EL 153.0, exactly.
    let (sr, el) = aggregate_sr_el(&[(true, 50), (false, 256)]);
    assert_eq!(sr, 0.5);
    assert_eq!(el, 153.0);

    // Failed episodes really do carry episode_length = max_steps.
    let instance = &corpus()[corpus().len() - 1]; // impossible swap
    let options = EpisodeOptions {
        max_steps: 40,
        dwl: 4,
        epl: 16,
    };
    let outcome = run_episode(
        &instance.map,
        &instance.tasks,
        &options,
        &GreedyPolicy,
        &mut Analyst::Off,
    )
    .unwrap();
    assert!(!outcome.metrics.success);
    assert_eq!(outcome.metrics.episode_length, 40);

    println!("ACCEPTANCE 6 (EL averaging rule): PASS: SR 0.5, EL 153.0 exact; failures pinned to max_steps");
}

// ---------------------------------------------------------------------------
// Criterion 7: LLM analyst contract against the local mock server.
// ---------------------------------------------------------------------------

fn llm_fixture() -> (DetectionWindow, Vec<DistanceField>, BTreeSet<usize>) {
    let map = GridMap::new(16, 16, vec![false; 256], "open").unwrap();
    let goals = vec![Cell::new(15, 5), Cell::new(0, 5)];
    let fields: Vec<DistanceField> = goals
        .iter()
        .map(|&g| build_distance_field(&map, g).unwrap())
        .collect();
    let frozen = vec![Cell::new(5, 5), Cell::new(5, 6)];
    let steps = vec![frozen.clone(), frozen.clone(), frozen.clone(), frozen];
    let window = DetectionWindow::new(&steps, &goals).unwrap();
    (window, fields, BTreeSet::from([0, 1]))
}

fn mock_config(endpoint: &str) -> LlmConfig {
    LlmConfig {
        endpoint: endpoint.to_string(),
        model: "mock".to_string(),
        api_key: Some("key".to_string()),
        timeout: Duration::from_secs(2),
        max_retries: 1,
        temperature: 0.0,
        backoff: Duration::from_millis(1),
    }
}

#[test]
fn c7_llm_analyst_contract() {
    let (window, fields, inspected) = llm_fixture();

    // (a) A valid verdict parses into exactly the report built by hand.
    let server = MockChatServer::start(vec![Scripted::Chat(
        r#"[{"agent_id":[0,1],"solution":"radiation"}]"#.to_string(),
    )]);
    let mut analyst = LlmAnalyst::new(mock_config(server.endpoint()));
    let report = analyst.analyze(&window, &fields, &inspected);
    assert_eq!(report.source, ReportSource::Llm);
    assert_eq!(report.groups.len(), 1);
    assert_eq!(report.groups[0].agent_ids, BTreeSet::from([0, 1]));
    assert_eq!(report.groups[0].solution, Solution::Radiation);
    drop(server);

    // (b) Each failure mode falls back to the rule report with its tag.
    let rule = analyze_rule_based(&window, &fields, &inspected);

    let check = |scripted: Vec<Scripted>, endpoint: Option<String>, tag: &str| {
        let server;
        let endpoint = match endpoint {
            Some(e) => e,
            None => {
                server = MockChatServer::start(scripted);
                server.endpoint().to_string()
            }
        };
        let mut analyst = LlmAnalyst::new(mock_config(&endpoint));
        let report = analyst.analyze(&window, &fields, &inspected);
        assert_eq!(report.source, ReportSource::Rule, "{tag}");
        assert!(
            report.provenance.starts_with(tag),
            "expected tag {tag:?}, got {:?}",
            report.provenance
        );
        assert_eq!(report.groups, rule.groups, "{tag}: must carry the rule verdict");
    };

    check(vec![], Some(refused_endpoint()), "fallback: network");
    check(
        vec![
            Scripted::Status(503, "{}".into()),
            Scripted::Status(503, "{}".into()),
        ],
        None,
        "fallback: http",
    );
    check(
        vec![Scripted::Chat("I see no issues here.".into())],
        None,
        "fallback: parse",
    );
    check(
        vec![Scripted::Chat(
            r#"[{"agent_id":[7],"solution":"leader"}]"#.into(),
        )],
        None,
        "fallback: schema",
    );
    check(
        vec![Scripted::Chat(
            r#"[{"agent_id":[0],"solution":"leader"},{"agent_id":[0,1],"solution":"radiation"}]"#
                .into(),
        )],
        None,
        "fallback: overlap",
    );

    println!("ACCEPTANCE 7 (LLM analyst contract): PASS: verdict parsed verbatim; network/http/parse/schema/overlap fall back with correct tags");
}

// ---------------------------------------------------------------------------
// Criterion 8: replay integrity for everything criteria 3 and 4 produced.
// ---------------------------------------------------------------------------

#[test]
fn c8_replay_integrity() {
    // Corpus episodes: write a replay per run, then validate it.
    let mut validated = 0usize;
    for run in corpus_runs() {
        let meta = ReplayMeta {
            map: run.map.name().to_string(),
            agents: run.tasks.len(),
            analyst: run.analyst.as_str().to_string(),
            dwl: 4,
            epl: 16,
            max_steps: 256,
            seed: 0,
            tasks: run.tasks.iter().map(task_to_record).collect(),
        };
        let mut buf = Vec::new();
        write_replay(&mut buf, &meta, &run.outcome.trajectory, &run.outcome.metrics).unwrap();
        let replay = read_replay(&buf[..]).unwrap();
        let violations = validate_replay(&replay, &run.map, &run.tasks);
        assert!(
            violations.is_empty(),
            "{} ({:?}): {violations:?}",
            run.name,
            run.analyst
        );
        validated += 1;
    }

    // Scale-run episodes: every replay file written by criterion 4.
    let runs = scale_runs();
    let map = llmdr_cli::load_map(&runs.map_path).unwrap();
    for arm in ["off", "rule"] {
        let replay_dir = runs.dir.path().join(arm).join("replays");
        let mut files: Vec<_> = std::fs::read_dir(&replay_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        assert_eq!(files.len(), 300, "{arm}: 3 agent counts x 100 episodes");
        for file in files {
            let (_, violations) = validate_replay_file(&file, &map, None).unwrap();
            assert!(violations.is_empty(), "{}: {violations:?}", file.display());
            validated += 1;
        }
    }

    println!("ACCEPTANCE 8 (replay integrity): PASS: {validated} replays validated");
}
