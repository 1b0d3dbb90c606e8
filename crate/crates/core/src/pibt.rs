//! One-step collision-free joint action selection via priority inheritance
//! with backtracking (PIBT).
//!
//! Agents are processed in priority order. An agent tries its ranked actions;
//! taking an action tentatively reserves its current vertex, the target
//! vertex and the directed edge between them. If the target holds an
//! unassigned agent, that agent plans next with inherited priority; if it
//! cannot move anywhere, the reservation is rolled back and the next action
//! is tried.
//!
//! The reverse-edge test forbids swaps; reserving the target vertex forbids
//! vertex conflicts; reserving the current vertex means a child in an
//! inheritance chain cannot simply stay put under its parent.

use std::collections::HashSet;

use crate::map::{Action, Cell, GridMap};
use crate::policy::{ActionRanking, JointState};

/// One action per agent, indexed by agent id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointMove {
    pub actions: Vec<Action>,
}

impl JointMove {
    /// Resulting position of every agent.
    pub fn targets(&self, positions: &[Cell]) -> Vec<Cell> {
        self.actions
            .iter()
            .zip(positions)
            .map(|(a, &p)| a.apply(p))
            .collect()
    }
}

/// A violation found by the independent move checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Conflict {
    /// Two agents end the step on the same cell.
    Vertex { a: usize, b: usize, cell: Cell },
    /// Two agents exchange adjacent cells in one step.
    Edge { a: usize, b: usize, from: Cell, to: Cell },
    /// An agent ends the step on a blocked or out-of-bounds cell.
    Obstacle { agent: usize, cell: Cell },
}

/// Result of one PIBT step. `fallback_agents` lists agents for which the
/// top-level invocation failed outright and Stay was assigned without a
/// reservation; with this reservation scheme that is never expected to
/// happen, and any occurrence is surfaced as an engine anomaly.
#[derive(Debug, Clone)]
pub struct PibtOutcome {
    pub moves: JointMove,
    pub fallback_agents: Vec<usize>,
}

struct Engine<'a> {
    map: &'a GridMap,
    positions: &'a [Cell],
    rankings: &'a [ActionRanking],
    occupant: Vec<Option<usize>>,
    moves: Vec<Option<Action>>,
    reserved_v: Vec<bool>,
    reserved_e: HashSet<(usize, usize)>,
}

impl Engine<'_> {
    /// PIBT-H: try to assign `agent` one of its ranked actions. Returns
    /// whether an assignment (for `agent` and every agent it displaced)
    /// stands. Recursion depth is bounded by the agent count: only unassigned
    /// agents are recursed into, and each is tentatively assigned first.
    ///
    /// A child that exhausts its actions commits to Stay on its own cell (the
    /// parent's reservation of that vertex stands and is handed over), so a
    /// failed agent is never re-explored; the whole step stays linear in the
    /// number of agents instead of backtracking exponentially.
    fn solve(&mut self, agent: usize, as_child: bool) -> bool {
        let from = self.positions[agent];
        let from_idx = self.map.index(from);
        for action in self.rankings[agent].actions() {
            let target = action.apply(from);
            if !self.map.is_passable(target) {
                continue;
            }
            let t_idx = self.map.index(target);
            if self.reserved_v[t_idx] {
                continue;
            }
            if self.reserved_e.contains(&(t_idx, from_idx)) {
                continue;
            }

            // Tentatively assign and reserve {from, target, (from, target)},
            // remembering exactly what this frame added so backtracking never
            // releases a parent's reservation.
            self.moves[agent] = Some(action);
            let added_from = !self.reserved_v[from_idx];
            self.reserved_v[from_idx] = true;
            let added_target = !self.reserved_v[t_idx];
            self.reserved_v[t_idx] = true;
            let added_edge = self.reserved_e.insert((from_idx, t_idx));

            match self.occupant[t_idx] {
                Some(j) if j != agent && self.moves[j].is_none() => {
                    if self.solve(j, true) {
                        return true;
                    }
                    // The occupant could not vacate and now stays on the
                    // target cell, keeping that vertex reserved. Roll back
                    // this agent's tentative move and try its next action.
                    self.moves[agent] = None;
                    if added_edge {
                        self.reserved_e.remove(&(from_idx, t_idx));
                    }
                    if added_from {
                        self.reserved_v[from_idx] = false;
                    }
                    debug_assert!(added_target, "occupied candidate must have been free");
                }
                _ => return true,
            }
        }
        if as_child {
            // Blocked on every side while a parent claims this cell's
            // occupant must move: settle for staying put. The parent's
            // reservation of this vertex transfers to the stay.
            self.moves[agent] = Some(Action::Stay);
        }
        false
    }
}

/// Run one PIBT step. `priorities` is a strict total order: agent ids from
/// highest to lowest priority, covering every agent exactly once.
pub fn pibt_step(
    state: &JointState,
    rankings: &[ActionRanking],
    priorities: &[usize],
    map: &GridMap,
) -> PibtOutcome {
    let n = state.n_agents();
    assert_eq!(rankings.len(), n, "one ranking per agent");
    assert_eq!(priorities.len(), n, "priorities must cover all agents");
    debug_assert!({
        let mut seen = vec![false; n];
        priorities.iter().all(|&a| {
            let fresh = !seen[a];
            seen[a] = true;
            fresh
        })
    });

    let mut occupant = vec![None; map.n_cells()];
    for (i, &p) in state.positions.iter().enumerate() {
        occupant[map.index(p)] = Some(i);
    }
    let mut engine = Engine {
        map,
        positions: &state.positions,
        rankings,
        occupant,
        moves: vec![None; n],
        reserved_v: vec![false; map.n_cells()],
        reserved_e: HashSet::new(),
    };

    let mut fallback_agents = Vec::new();
    for &agent in priorities {
        if engine.moves[agent].is_none() && !engine.solve(agent, false) {
            // All five actions blocked at top level. Assign Stay without
            // reserving and let the caller's checker confirm no harm done.
            engine.moves[agent] = Some(Action::Stay);
            fallback_agents.push(agent);
        }
    }

    PibtOutcome {
        moves: JointMove {
            actions: engine.moves.into_iter().map(Option::unwrap).collect(),
        },
        fallback_agents,
    }
}

/// Independent joint-move checker: reports every vertex conflict, edge (swap)
/// conflict and obstacle violation. An empty result means the move is valid.
pub fn verify_joint_move(state: &JointState, map: &GridMap, mv: &JointMove) -> Vec<Conflict> {
    let n = state.n_agents();
    let targets = mv.targets(&state.positions);
    let mut conflicts = Vec::new();

    for (i, &t) in targets.iter().enumerate() {
        if !map.is_passable(t) {
            conflicts.push(Conflict::Obstacle { agent: i, cell: t });
        }
    }

    // Vertex conflicts: bucket agents by target cell.
    let mut by_target: std::collections::HashMap<Cell, Vec<usize>> =
        std::collections::HashMap::new();
    for (i, &t) in targets.iter().enumerate() {
        by_target.entry(t).or_default().push(i);
    }
    let mut vertex_groups: Vec<&Vec<usize>> =
        by_target.values().filter(|v| v.len() > 1).collect();
    vertex_groups.sort_by_key(|v| v[0]);
    for group in vertex_groups {
        for (k, &a) in group.iter().enumerate() {
            for &b in &group[k + 1..] {
                conflicts.push(Conflict::Vertex {
                    a,
                    b,
                    cell: targets[a],
                });
            }
        }
    }

    // Edge conflicts: i moves onto j's cell while j moves onto i's.
    let mut by_position: std::collections::HashMap<Cell, usize> =
        std::collections::HashMap::new();
    for (i, &p) in state.positions.iter().enumerate() {
        by_position.insert(p, i);
    }
    for i in 0..n {
        if targets[i] == state.positions[i] {
            continue;
        }
        if let Some(&j) = by_position.get(&targets[i]) {
            if j > i && targets[j] == state.positions[i] {
                conflicts.push(Conflict::Edge {
                    a: i,
                    b: j,
                    from: state.positions[i],
                    to: state.positions[j],
                });
            }
        }
    }

    conflicts
}
