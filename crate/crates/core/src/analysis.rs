//! Deadlock analysis: classify agent behavior over a detection window, group
//! deadlocked agents, and assign each group a resolution strategy.
//!
//! This module is the deterministic rule-based analyst; it doubles as the
//! fallback and reference for the LLM-backed analyst. A deadlock is either no
//! movement at all, or wandering: no net true-distance progress toward the
//! goal across the window.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;
use thiserror::Error;

use crate::dist::DistanceField;
use crate::map::{chebyshev, manhattan, Cell};

/// Agents at or beyond this Manhattan goal distance force the leader method.
pub const LEADER_DISTANCE: u32 = 8;
/// Deadlocked agents within this Manhattan distance of each other group together.
pub const GROUP_DISTANCE: u32 = 2;
/// Chebyshev radius of the square inspection area around a stuck agent
/// (a 9x9 box).
pub const INSPECTION_RADIUS: u32 = 4;

/// Behavior of one agent across the detection window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentClass {
    /// Same cell at every window step, and not the goal.
    NoMovement,
    /// Moving, but with no net progress toward the goal.
    Wandering,
    /// Making progress.
    Normal,
    /// On its goal at the final window step.
    Arrived,
}

impl AgentClass {
    pub fn is_deadlocked(self) -> bool {
        matches!(self, AgentClass::NoMovement | AgentClass::Wandering)
    }
}

/// Resolution strategy for a deadlock group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Solution {
    Leader,
    Radiation,
}

impl Solution {
    pub fn as_str(self) -> &'static str {
        match self {
            Solution::Leader => "leader",
            Solution::Radiation => "radiation",
        }
    }
}

/// A set of agents to be resolved together, with the chosen strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlockGroup {
    pub agent_ids: BTreeSet<usize>,
    pub solution: Solution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportSource {
    Rule,
    Llm,
}

/// Analyst verdict: disjoint deadlock groups over the inspected agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub groups: Vec<DeadlockGroup>,
    pub inspected: BTreeSet<usize>,
    pub source: ReportSource,
    pub provenance: String,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("agent {0} appears in more than one group")]
    OverlappingGroups(usize),

    #[error("group {0} is empty")]
    EmptyGroup(usize),
}

impl AnalysisReport {
    pub fn no_deadlock(inspected: BTreeSet<usize>, source: ReportSource, provenance: &str) -> Self {
        AnalysisReport {
            groups: Vec::new(),
            inspected,
            source,
            provenance: provenance.to_string(),
        }
    }

    /// Groups must be non-empty and pairwise disjoint, whatever their source.
    pub fn validate(&self) -> Result<(), ReportError> {
        let mut seen = BTreeSet::new();
        for (gi, g) in self.groups.iter().enumerate() {
            if g.agent_ids.is_empty() {
                return Err(ReportError::EmptyGroup(gi));
            }
            for &a in &g.agent_ids {
                if !seen.insert(a) {
                    return Err(ReportError::OverlappingGroups(a));
                }
            }
        }
        Ok(())
    }

    /// Serialize groups in the analyst wire schema:
    /// `[{"agent_id": [ints], "solution": "leader"|"radiation"}]`.
    pub fn to_schema_json(&self) -> serde_json::Value {
        json!(self
            .groups
            .iter()
            .map(|g| {
                json!({
                    "agent_id": g.agent_ids.iter().copied().collect::<Vec<_>>(),
                    "solution": g.solution.as_str(),
                })
            })
            .collect::<Vec<_>>())
    }
}

/// One agent's row of a detection window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub agent_id: usize,
    pub goal: Cell,
    /// Position at each window step; index 0 is the live state at window start.
    pub positions: Vec<Cell>,
}

impl WindowRow {
    pub fn arrived_at(&self, step: usize) -> bool {
        self.positions[step] == self.goal
    }

    pub fn final_position(&self) -> Cell {
        *self.positions.last().unwrap()
    }
}

/// Position logs for all agents over the first DWL steps of an execution
/// plan. Row 0 of each agent equals the live joint state at window start.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionWindow {
    rows: Vec<WindowRow>,
    len: usize,
}

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("detection window needs at least 2 steps, got {0}")]
    TooShort(usize),

    #[error("step {step} has {found} positions, expected {expected}")]
    RaggedStep {
        step: usize,
        found: usize,
        expected: usize,
    },
}

impl DetectionWindow {
    /// Build from per-step position rows (`steps[t][agent]`) and goals.
    pub fn new(steps: &[Vec<Cell>], goals: &[Cell]) -> Result<Self, WindowError> {
        if steps.len() < 2 {
            return Err(WindowError::TooShort(steps.len()));
        }
        let n = goals.len();
        for (t, row) in steps.iter().enumerate() {
            if row.len() != n {
                return Err(WindowError::RaggedStep {
                    step: t,
                    found: row.len(),
                    expected: n,
                });
            }
        }
        let rows = (0..n)
            .map(|agent| WindowRow {
                agent_id: agent,
                goal: goals[agent],
                positions: steps.iter().map(|row| row[agent]).collect(),
            })
            .collect();
        Ok(DetectionWindow {
            rows,
            len: steps.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0 // cannot happen: at least 2 steps by construction
    }

    pub fn n_agents(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, agent: usize) -> &WindowRow {
        &self.rows[agent]
    }

    pub fn rows(&self) -> &[WindowRow] {
        &self.rows
    }
}

/// Agents worth inspecting: those that never stand on their goal at any step
/// of the execution plan, plus everyone whose current position falls in the
/// 9x9 box around such an agent.
pub fn select_inspection_set(plan_rows: &[Vec<Cell>], goals: &[Cell]) -> BTreeSet<usize> {
    let n = goals.len();
    if plan_rows.is_empty() {
        return BTreeSet::new();
    }
    let current = &plan_rows[0];
    let stuck: Vec<usize> = (0..n)
        .filter(|&agent| plan_rows.iter().all(|row| row[agent] != goals[agent]))
        .collect();
    let mut inspected: BTreeSet<usize> = stuck.iter().copied().collect();
    for agent in 0..n {
        if inspected.contains(&agent) {
            continue;
        }
        if stuck
            .iter()
            .any(|&s| chebyshev(current[agent], current[s]) <= INSPECTION_RADIUS)
        {
            inspected.insert(agent);
        }
    }
    inspected
}

/// Classify one agent's window behavior against its true-distance field.
pub fn classify_agent(row: &WindowRow, field: &DistanceField) -> AgentClass {
    if row.final_position() == row.goal {
        return AgentClass::Arrived;
    }
    let first = row.positions[0];
    if row.positions.iter().all(|&p| p == first) {
        return AgentClass::NoMovement;
    }
    let start = field.get(first).map_or(u64::MAX, u64::from);
    let end = field.get(row.final_position()).map_or(u64::MAX, u64::from);
    if end >= start {
        AgentClass::Wandering
    } else {
        AgentClass::Normal
    }
}

/// Group deadlocked agents that sit within `GROUP_DISTANCE` of each other at
/// the final window step; arrived agents within range of a deadlocked agent
/// join that agent's component (and can merge two components).
pub fn group_deadlocked(
    classes: &BTreeMap<usize, AgentClass>,
    final_positions: &BTreeMap<usize, Cell>,
) -> Vec<BTreeSet<usize>> {
    let deadlocked: Vec<usize> = classes
        .iter()
        .filter(|(_, c)| c.is_deadlocked())
        .map(|(&a, _)| a)
        .collect();
    let arrived: Vec<usize> = classes
        .iter()
        .filter(|(_, c)| matches!(c, AgentClass::Arrived))
        .map(|(&a, _)| a)
        .collect();

    // Union-find over deadlocked union arrived; arrived-arrived pairs never link.
    let members: Vec<usize> = deadlocked.iter().chain(arrived.iter()).copied().collect();
    let index: BTreeMap<usize, usize> = members
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, i))
        .collect();
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    };

    for (i, &a) in deadlocked.iter().enumerate() {
        for &b in &deadlocked[i + 1..] {
            if manhattan(final_positions[&a], final_positions[&b]) <= GROUP_DISTANCE {
                union(&mut parent, index[&a], index[&b]);
            }
        }
    }
    for &arr in &arrived {
        for &d in &deadlocked {
            if manhattan(final_positions[&arr], final_positions[&d]) <= GROUP_DISTANCE {
                union(&mut parent, index[&arr], index[&d]);
            }
        }
    }

    let mut components: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, &agent) in members.iter().enumerate() {
        let root = find(&mut parent, i);
        components.entry(root).or_default().insert(agent);
    }
    // Components with no deadlocked member are arrived agents standing alone.
    components
        .into_values()
        .filter(|c| c.iter().any(|a| classes[a].is_deadlocked()))
        .collect()
}

/// Leader when the group is a single agent or any member's goal lies
/// `LEADER_DISTANCE` or more Manhattan units away; radiation otherwise.
pub fn assign_solution(
    group: &BTreeSet<usize>,
    final_positions: &BTreeMap<usize, Cell>,
    goals: &[Cell],
) -> Solution {
    if group.len() == 1 {
        return Solution::Leader;
    }
    let far = group
        .iter()
        .any(|&a| manhattan(final_positions[&a], goals[a]) >= LEADER_DISTANCE);
    if far {
        Solution::Leader
    } else {
        Solution::Radiation
    }
}

/// The three-stage rule analyst, restricted to the inspection set. Pure and
/// deterministic: the same window always yields the same report.
pub fn analyze_rule_based(
    window: &DetectionWindow,
    fields: &[DistanceField],
    inspected: &BTreeSet<usize>,
) -> AnalysisReport {
    let mut classes = BTreeMap::new();
    let mut final_positions = BTreeMap::new();
    for &agent in inspected {
        let row = window.row(agent);
        classes.insert(agent, classify_agent(row, &fields[agent]));
        final_positions.insert(agent, row.final_position());
    }
    let goals: Vec<Cell> = window.rows().iter().map(|r| r.goal).collect();
    let groups = group_deadlocked(&classes, &final_positions)
        .into_iter()
        .map(|agent_ids| {
            let solution = assign_solution(&agent_ids, &final_positions, &goals);
            DeadlockGroup {
                agent_ids,
                solution,
            }
        })
        .collect();
    let report = AnalysisReport {
        groups,
        inspected: inspected.clone(),
        source: ReportSource::Rule,
        provenance: "rule".to_string(),
    };
    report.validate().expect("rule analyst produced overlapping groups");
    report
}
