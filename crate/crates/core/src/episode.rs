//! The outer loop: simulate an execution plan with the base policy, analyze
//! its detection window, then either commit the plan to the live environment
//! or run strategized resolution, until every agent stands on its goal or the
//! step budget runs out.

use thiserror::Error;

use crate::analysis::{analyze_rule_based, AnalysisReport, DetectionWindow};
use crate::dist::{build_distance_field, DistanceField};
use crate::llm::LlmAnalyst;
use crate::map::{Cell, GridMap, MapError, ScenarioTask};
use crate::pibt::{pibt_step, verify_joint_move};
use crate::policy::{BasePolicy, JointState, PolicyError, StateError};
use crate::resolve::{apply_move, resolve_deadlock, ResolveError};

/// Default detection window length.
pub const DEFAULT_DWL: usize = 4;
/// Default execution plan length.
pub const DEFAULT_EPL: usize = 16;
/// Default step budget per episode.
pub const DEFAULT_MAX_STEPS: usize = 256;

/// Lookahead log: positions per agent for steps 0..=horizon, row 0 being the
/// live state the plan was simulated from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub rows: Vec<Vec<Cell>>,
}

impl ExecutionPlan {
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    /// The first `dwl` rows, as the detection window sees them.
    pub fn window_rows(&self, dwl: usize) -> &[Vec<Cell>] {
        &self.rows[..dwl.min(self.rows.len())]
    }
}

/// Which analyst drives detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalystMode {
    /// No detection at all: pure base-model control arm.
    Off,
    /// Deterministic rule-based analyst.
    Rule,
    /// LLM-backed analyst with rule fallback.
    Llm,
}

impl AnalystMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalystMode::Off => "off",
            AnalystMode::Rule => "rule",
            AnalystMode::Llm => "llm",
        }
    }
}

/// Episode-level knobs. `dwl` must be in `2..=epl`.
#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub max_steps: usize,
    pub dwl: usize,
    pub epl: usize,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            max_steps: DEFAULT_MAX_STEPS,
            dwl: DEFAULT_DWL,
            epl: DEFAULT_EPL,
        }
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error(transparent)]
    Map(#[from] MapError),

    #[error(transparent)]
    State(#[from] StateError),

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Resolve(#[from] ResolveError),

    #[error("window construction: {0}")]
    Window(String),
}

impl EpisodeOptions {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.max_steps == 0 {
            return Err(EpisodeError::InvalidOptions("max_steps must be >= 1".into()));
        }
        if self.dwl < 2 {
            return Err(EpisodeError::InvalidOptions(format!(
                "dwl must be >= 2, got {}",
                self.dwl
            )));
        }
        if self.dwl > self.epl {
            return Err(EpisodeError::InvalidOptions(format!(
                "dwl ({}) must not exceed epl ({})",
                self.dwl, self.epl
            )));
        }
        Ok(())
    }
}

/// What happened in one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub success: bool,
    pub episode_length: usize,
    pub analyst_calls: usize,
    pub deadlock_reports: usize,
    pub resolution_steps: usize,
    pub fallbacks: usize,
    pub engine_anomalies: usize,
}

/// Which phase produced a trajectory step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PlanCommit,
    Resolution,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PlanCommit => "plan-commit",
            Phase::Resolution => "resolution",
        }
    }
}

/// One executed step of the live environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub positions: Vec<Cell>,
    pub phase: Phase,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub trajectory: Vec<TrajectoryStep>,
}

/// The analyst handle for one episode.
pub enum Analyst<'a> {
    Off,
    Rule,
    Llm(&'a mut LlmAnalyst),
}

impl Analyst<'_> {
    pub fn mode(&self) -> AnalystMode {
        match self {
            Analyst::Off => AnalystMode::Off,
            Analyst::Rule => AnalystMode::Rule,
            Analyst::Llm(_) => AnalystMode::Llm,
        }
    }
}

/// Simulate the base policy through PIBT (ascending-id priorities) for `epl`
/// steps from a copy of `state`; the live environment is not advanced.
/// Returns the plan and the count of engine anomalies seen while simulating.
pub fn simulate_plan(
    state: &JointState,
    policy: &dyn BasePolicy,
    fields: &[DistanceField],
    epl: usize,
    map: &GridMap,
) -> Result<(ExecutionPlan, usize), PolicyError> {
    let n = state.n_agents();
    let priorities: Vec<usize> = (0..n).collect();
    let mut lookahead = state.clone();
    let mut rows = Vec::with_capacity(epl + 1);
    rows.push(lookahead.positions.clone());
    let mut anomalies = 0;
    for _ in 0..epl {
        let rankings = policy.preferences(&lookahead, map, fields)?;
        let out = pibt_step(&lookahead, &rankings, &priorities, map);
        anomalies += out.fallback_agents.len();
        apply_move(&mut lookahead, &out.moves);
        rows.push(lookahead.positions.clone());
    }
    Ok((ExecutionPlan { rows }, anomalies))
}

/// Build the per-agent distance fields for a task set.
pub fn build_fields(map: &GridMap, tasks: &[ScenarioTask]) -> Result<Vec<DistanceField>, MapError> {
    tasks
        .iter()
        .map(|t| build_distance_field(map, t.goal))
        .collect()
}

/// Run one full episode. Success means all agents stand on their goals
/// simultaneously at some step within the budget; the episode length is the
/// first such step, or `max_steps` on failure.
pub fn run_episode(
    map: &GridMap,
    tasks: &[ScenarioTask],
    options: &EpisodeOptions,
    policy: &dyn BasePolicy,
    analyst: &mut Analyst<'_>,
) -> Result<EpisodeOutcome, EpisodeError> {
    options.validate()?;
    let fields = build_fields(map, tasks)?;
    let starts: Vec<Cell> = tasks.iter().map(|t| t.start).collect();
    let goals: Vec<Cell> = tasks.iter().map(|t| t.goal).collect();
    let mut state = JointState::new(starts, goals, 0, map)?;
    for (i, t) in tasks.iter().enumerate() {
        if fields[i].get(t.start).is_none() {
            return Err(EpisodeError::Policy(PolicyError::UnreachableGoal {
                agent: i,
                position: t.start,
                goal: t.goal,
            }));
        }
    }

    let mut metrics = EpisodeMetrics {
        success: state.all_arrived(),
        episode_length: 0,
        analyst_calls: 0,
        deadlock_reports: 0,
        resolution_steps: 0,
        fallbacks: 0,
        engine_anomalies: 0,
    };
    let mut trajectory = Vec::new();

    if metrics.success {
        return Ok(EpisodeOutcome { metrics, trajectory });
    }

    while state.step < options.max_steps {
        let (plan, plan_anomalies) =
            simulate_plan(&state, policy, &fields, options.epl, map)?;
        metrics.engine_anomalies += plan_anomalies;

        let report: Option<AnalysisReport> = match analyst {
            Analyst::Off => None,
            Analyst::Rule | Analyst::Llm(_) => {
                let inspected =
                    crate::analysis::select_inspection_set(&plan.rows, &state.goals);
                if inspected.is_empty() {
                    None
                } else {
                    let window =
                        DetectionWindow::new(plan.window_rows(options.dwl), &state.goals)
                            .map_err(|e| EpisodeError::Window(e.to_string()))?;
                    metrics.analyst_calls += 1;
                    let rep = match analyst {
                        Analyst::Rule => analyze_rule_based(&window, &fields, &inspected),
                        Analyst::Llm(client) => {
                            let rep = client.analyze(&window, &fields, &inspected);
                            if rep.provenance.starts_with("fallback") {
                                metrics.fallbacks += 1;
                            }
                            rep
                        }
                        Analyst::Off => unreachable!(),
                    };
                    if rep.groups.is_empty() {
                        None
                    } else {
                        Some(rep)
                    }
                }
            }
        };

        match report {
            None => {
                // Commit the logged plan verbatim, stopping early on success
                // or an exhausted budget.
                for row in plan.rows.iter().skip(1) {
                    if state.step >= options.max_steps {
                        break;
                    }
                    state.positions = row.clone();
                    state.step += 1;
                    trajectory.push(TrajectoryStep {
                        positions: row.clone(),
                        phase: Phase::PlanCommit,
                    });
                    if state.all_arrived() {
                        metrics.success = true;
                        break;
                    }
                }
            }
            Some(rep) => {
                metrics.deadlock_reports += 1;
                let budget = options.max_steps - state.step;
                let out = resolve_deadlock(
                    &rep,
                    &mut state,
                    map,
                    &fields,
                    policy,
                    options.epl,
                    budget,
                )?;
                metrics.resolution_steps += out.segment.len();
                metrics.engine_anomalies += out.anomalies;
                for row in out.segment {
                    trajectory.push(TrajectoryStep {
                        positions: row,
                        phase: Phase::Resolution,
                    });
                }
                if state.all_arrived() {
                    metrics.success = true;
                }
            }
        }

        if metrics.success {
            break;
        }
    }

    metrics.episode_length = if metrics.success {
        state.step
    } else {
        options.max_steps
    };
    Ok(EpisodeOutcome { metrics, trajectory })
}

/// Re-check a whole trajectory step by step with the independent move
/// checker. Used by tests and assertion-mode callers.
pub fn trajectory_is_collision_free(
    map: &GridMap,
    tasks: &[ScenarioTask],
    trajectory: &[TrajectoryStep],
) -> bool {
    let mut positions: Vec<Cell> = tasks.iter().map(|t| t.start).collect();
    let goals: Vec<Cell> = tasks.iter().map(|t| t.goal).collect();
    for step in trajectory {
        let state = match JointState::new(positions.clone(), goals.clone(), 0, map) {
            Ok(s) => s,
            Err(_) => return false,
        };
        // Reconstruct the implied joint move; neighbor-or-stay is part of it.
        let mut actions = Vec::with_capacity(positions.len());
        for (&from, &to) in positions.iter().zip(&step.positions) {
            let action = crate::map::Action::ALL
                .into_iter()
                .find(|a| a.apply(from) == to);
            match action {
                Some(a) => actions.push(a),
                None => return false,
            }
        }
        let mv = crate::pibt::JointMove { actions };
        if !verify_joint_move(&state, map, &mv).is_empty() {
            return false;
        }
        positions = step.positions.clone();
    }
    true
}
