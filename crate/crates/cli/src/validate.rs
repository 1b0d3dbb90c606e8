//! Independent end-to-end replay checker: re-verifies every recorded step for
//! obstacle, vertex and edge violations, step reachability, and that the
//! terminal state matches the recorded success flag.
//!
//! The checks are written directly against the records rather than reusing
//! the engine's verifier; this file is the second route.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use llmdr_core::map::{Cell, GridMap, ScenarioTask};
use llmdr_core::replay::{read_replay, Replay, ReplayError};

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayViolation {
    AgentCountMismatch {
        step: usize,
        found: usize,
        expected: usize,
    },
    NonSequentialStep {
        step: usize,
        expected: usize,
    },
    UnknownPhase {
        step: usize,
        phase: String,
    },
    Obstacle {
        step: usize,
        agent: usize,
        cell: Cell,
    },
    UnreachableStep {
        step: usize,
        agent: usize,
        from: Cell,
        to: Cell,
    },
    VertexConflict {
        step: usize,
        a: usize,
        b: usize,
        cell: Cell,
    },
    EdgeConflict {
        step: usize,
        a: usize,
        b: usize,
    },
    SuccessFlagMismatch {
        recorded: bool,
        terminal_on_goals: bool,
    },
    EpisodeLengthMismatch {
        recorded: usize,
        steps: usize,
    },
    TaskCountMismatch {
        meta: usize,
        tasks: usize,
    },
}

impl fmt::Display for ReplayViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayViolation::AgentCountMismatch { step, found, expected } => {
                write!(f, "step {step}: {found} positions, expected {expected}")
            }
            ReplayViolation::NonSequentialStep { step, expected } => {
                write!(f, "step {step}: expected step number {expected}")
            }
            ReplayViolation::UnknownPhase { step, phase } => {
                write!(f, "step {step}: unknown phase {phase:?}")
            }
            ReplayViolation::Obstacle { step, agent, cell } => {
                write!(f, "step {step}: agent {agent} on blocked cell {cell}")
            }
            ReplayViolation::UnreachableStep { step, agent, from, to } => {
                write!(f, "step {step}: agent {agent} teleports {from} -> {to}")
            }
            ReplayViolation::VertexConflict { step, a, b, cell } => {
                write!(f, "step {step}: agents {a} and {b} share {cell}")
            }
            ReplayViolation::EdgeConflict { step, a, b } => {
                write!(f, "step {step}: agents {a} and {b} swap cells")
            }
            ReplayViolation::SuccessFlagMismatch { recorded, terminal_on_goals } => {
                write!(
                    f,
                    "summary says success={recorded} but terminal goal occupancy is {terminal_on_goals}"
                )
            }
            ReplayViolation::EpisodeLengthMismatch { recorded, steps } => {
                write!(f, "summary says episode_length={recorded} but file has {steps} steps")
            }
            ReplayViolation::TaskCountMismatch { meta, tasks } => {
                write!(f, "meta says {meta} agents but {tasks} tasks were supplied")
            }
        }
    }
}

fn as_cell(p: [i32; 2]) -> Cell {
    Cell::new(p[0], p[1])
}

/// Validate a parsed replay against a map and task set. Empty result = ok.
pub fn validate_replay(
    replay: &Replay,
    map: &GridMap,
    tasks: &[ScenarioTask],
) -> Vec<ReplayViolation> {
    let mut violations = Vec::new();
    let n = tasks.len();
    if replay.meta.agents != n {
        violations.push(ReplayViolation::TaskCountMismatch {
            meta: replay.meta.agents,
            tasks: n,
        });
    }

    let mut previous: Vec<Cell> = tasks.iter().map(|t| t.start).collect();
    for (idx, record) in replay.steps.iter().enumerate() {
        let step = record.step;
        if step != idx + 1 {
            violations.push(ReplayViolation::NonSequentialStep {
                step,
                expected: idx + 1,
            });
        }
        if record.phase != "plan-commit" && record.phase != "resolution" {
            violations.push(ReplayViolation::UnknownPhase {
                step,
                phase: record.phase.clone(),
            });
        }
        if record.positions.len() != n {
            violations.push(ReplayViolation::AgentCountMismatch {
                step,
                found: record.positions.len(),
                expected: n,
            });
            // Row shape is broken; later checks would index out of bounds.
            return violations;
        }
        let current: Vec<Cell> = record.positions.iter().map(|&p| as_cell(p)).collect();

        for (agent, &cell) in current.iter().enumerate() {
            if !map.is_passable(cell) {
                violations.push(ReplayViolation::Obstacle { step, agent, cell });
            }
            let from = previous[agent];
            let dx = (cell.x - from.x).abs();
            let dy = (cell.y - from.y).abs();
            if dx + dy > 1 {
                violations.push(ReplayViolation::UnreachableStep {
                    step,
                    agent,
                    from,
                    to: cell,
                });
            }
        }

        let mut seen: HashMap<Cell, usize> = HashMap::new();
        for (agent, &cell) in current.iter().enumerate() {
            if let Some(&other) = seen.get(&cell) {
                violations.push(ReplayViolation::VertexConflict {
                    step,
                    a: other,
                    b: agent,
                    cell,
                });
            } else {
                seen.insert(cell, agent);
            }
        }

        let was_at: HashMap<Cell, usize> = previous
            .iter()
            .enumerate()
            .map(|(agent, &c)| (c, agent))
            .collect();
        for (agent, &cell) in current.iter().enumerate() {
            if cell == previous[agent] {
                continue;
            }
            if let Some(&other) = was_at.get(&cell) {
                if other > agent && current[other] == previous[agent] {
                    violations.push(ReplayViolation::EdgeConflict {
                        step,
                        a: agent,
                        b: other,
                    });
                }
            }
        }

        previous = current;
    }

    let terminal_on_goals = previous
        .iter()
        .zip(tasks)
        .all(|(&pos, task)| pos == task.goal);
    if terminal_on_goals != replay.summary.success {
        violations.push(ReplayViolation::SuccessFlagMismatch {
            recorded: replay.summary.success,
            terminal_on_goals,
        });
    }
    if replay.summary.episode_length != replay.steps.len() {
        violations.push(ReplayViolation::EpisodeLengthMismatch {
            recorded: replay.summary.episode_length,
            steps: replay.steps.len(),
        });
    }
    violations
}

/// Load a replay file and validate it; tasks come from the file's meta record
/// unless an explicit task set is supplied.
pub fn validate_replay_file(
    path: &Path,
    map: &GridMap,
    tasks: Option<&[ScenarioTask]>,
) -> Result<(Replay, Vec<ReplayViolation>), ReplayError> {
    let file = std::fs::File::open(path)?;
    let replay = read_replay(std::io::BufReader::new(file))?;
    let meta_tasks: Vec<ScenarioTask>;
    let tasks = match tasks {
        Some(t) => t,
        None => {
            meta_tasks = replay
                .meta
                .tasks
                .iter()
                .enumerate()
                .map(|(agent_id, t)| ScenarioTask {
                    agent_id,
                    start: as_cell(t.start),
                    goal: as_cell(t.goal),
                    declared_optimal: None,
                })
                .collect();
            &meta_tasks
        }
    };
    let violations = validate_replay(&replay, map, tasks);
    Ok((replay, violations))
}
