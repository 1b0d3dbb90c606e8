//! Deadlock resolution: turn an analysis report into per-step agent
//! priorities and action rankings, then drive PIBT until the intervention
//! horizon runs out.
//!
//! Roles, in descending priority: Lead (leader-group member farthest from its
//! goal, walks the shortest-path heuristic), Radiate (radiation-group member,
//! walks away from the group's mean position), NonDeadlock (keeps the base
//! model's ranking), Yield (leader-group remainder, prefers staying).
//!
//! Group membership is frozen for the lifetime of a report; leads and centers
//! are recomputed from live positions every step, so a radiating group's
//! center follows the group and an arrived lead cedes leadership.

use thiserror::Error;

use crate::analysis::{AnalysisReport, Solution};
use crate::dist::{rank_actions_toward, DistanceField};
use crate::map::{Action, Cell, GridMap};
use crate::pibt::{pibt_step, verify_joint_move, JointMove};
use crate::policy::{ActionRanking, BasePolicy, JointState, PolicyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Lead,
    Radiate,
    NonDeadlock,
    Yield,
}

impl Role {
    fn tier(self) -> u8 {
        match self {
            Role::Lead => 0,
            Role::Radiate => 1,
            Role::NonDeadlock => 2,
            Role::Yield => 3,
        }
    }
}

/// Mean position of a group, kept as exact integer sums so distance
/// comparisons never depend on float rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupCenter {
    sum_x: i64,
    sum_y: i64,
    count: i64,
}

impl GroupCenter {
    fn of(cells: impl Iterator<Item = Cell>) -> Self {
        let mut sum_x = 0;
        let mut sum_y = 0;
        let mut count = 0;
        for c in cells {
            sum_x += c.x as i64;
            sum_y += c.y as i64;
            count += 1;
        }
        GroupCenter { sum_x, sum_y, count }
    }

    /// Squared Euclidean distance from the center to `c`, scaled by count^2.
    fn scaled_sq_distance(&self, c: Cell) -> i128 {
        let dx = (self.count * c.x as i64 - self.sum_x) as i128;
        let dy = (self.count * c.y as i64 - self.sum_y) as i128;
        dx * dx + dy * dy
    }

    /// The center as real coordinates (for reporting only).
    pub fn as_f64(&self) -> (f64, f64) {
        (
            self.sum_x as f64 / self.count as f64,
            self.sum_y as f64 / self.count as f64,
        )
    }

    pub fn count(&self) -> i64 {
        self.count
    }
}

/// Per-step role assignment derived from a report and the live state.
#[derive(Debug, Clone)]
pub struct RoleAssignment {
    pub roles: Vec<Role>,
    /// Group index (into the report's groups) per agent, if any.
    pub group_of: Vec<Option<usize>>,
    /// Deadlock center per radiation group, indexed like the report's groups.
    pub centers: Vec<Option<GroupCenter>>,
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("report has no deadlock groups; resolution must not be invoked")]
    EmptyReport,

    #[error("group {group} references agent {agent} absent from the state")]
    UnknownAgent { group: usize, agent: usize },

    #[error("agent {agent} cannot reach its goal from {position}")]
    Unreachable { agent: usize, position: Cell },

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error("resolution step produced conflicts: {0:?}")]
    UnsafeStep(String),
}

fn goal_distance(fields: &[DistanceField], state: &JointState, agent: usize) -> u64 {
    fields[agent]
        .get(state.positions[agent])
        .map_or(u64::MAX, u64::from)
}

/// Recompute roles from live positions. Leader groups elect the member
/// farthest from its goal (ties to the lowest id); everyone else in the group
/// yields. Radiation groups radiate around the mean of current positions.
pub fn assign_roles(
    report: &AnalysisReport,
    state: &JointState,
    fields: &[DistanceField],
) -> Result<RoleAssignment, ResolveError> {
    let n = state.n_agents();
    let mut roles = vec![Role::NonDeadlock; n];
    let mut group_of = vec![None; n];
    let mut centers = vec![None; report.groups.len()];

    for (gi, group) in report.groups.iter().enumerate() {
        for &agent in &group.agent_ids {
            if agent >= n {
                return Err(ResolveError::UnknownAgent { group: gi, agent });
            }
            group_of[agent] = Some(gi);
        }
        match group.solution {
            Solution::Leader => {
                let lead = group
                    .agent_ids
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        goal_distance(fields, state, a)
                            .cmp(&goal_distance(fields, state, b))
                            // On ties prefer the lower id: compare reversed ids.
                            .then(b.cmp(&a))
                    })
                    .expect("groups are non-empty");
                for &agent in &group.agent_ids {
                    roles[agent] = if agent == lead { Role::Lead } else { Role::Yield };
                }
            }
            Solution::Radiation => {
                for &agent in &group.agent_ids {
                    roles[agent] = Role::Radiate;
                }
                centers[gi] = Some(GroupCenter::of(
                    group.agent_ids.iter().map(|&a| state.positions[a]),
                ));
            }
        }
    }

    Ok(RoleAssignment {
        roles,
        group_of,
        centers,
    })
}

/// Ranking for a radiating agent: actions sorted by descending distance of
/// the resulting cell from the group center; blocked or out-of-bounds results
/// last; ties in the fixed action order.
fn radiate_ranking(map: &GridMap, center: &GroupCenter, from: Cell) -> ActionRanking {
    let mut actions = Action::ALL;
    let key = |a: Action| -> Option<i128> {
        let t = a.apply(from);
        if map.is_passable(t) {
            Some(center.scaled_sq_distance(t))
        } else {
            None
        }
    };
    actions.sort_by(|&a, &b| match (key(a), key(b)) {
        (Some(ka), Some(kb)) => kb.cmp(&ka),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    ActionRanking::new(actions)
}

/// Per-agent action rankings under the strategy.
pub fn build_rankings(
    roles: &RoleAssignment,
    state: &JointState,
    fields: &[DistanceField],
    map: &GridMap,
    base: &[ActionRanking],
) -> Result<Vec<ActionRanking>, ResolveError> {
    (0..state.n_agents())
        .map(|agent| match roles.roles[agent] {
            Role::Lead => rank_actions_toward(&fields[agent], state.positions[agent]).map_err(
                |_| ResolveError::Unreachable {
                    agent,
                    position: state.positions[agent],
                },
            ),
            Role::Radiate => {
                let gi = roles.group_of[agent].expect("radiate agent has a group");
                let center = roles.centers[gi].as_ref().expect("radiation group has a center");
                Ok(radiate_ranking(map, center, state.positions[agent]))
            }
            Role::NonDeadlock => Ok(base[agent]),
            Role::Yield => Ok(base[agent].promote(Action::Stay)),
        })
        .collect()
}

/// Strict total priority order (agent ids, highest first): tiers Lead >
/// Radiate > NonDeadlock > Yield; leads by descending goal distance, radiate
/// agents by descending distance from their own group center, everyone else
/// by ascending id. Every remaining tie breaks to the lower id.
pub fn build_priorities(
    roles: &RoleAssignment,
    state: &JointState,
    fields: &[DistanceField],
) -> Vec<usize> {
    let n = state.n_agents();
    let radiate_key = |agent: usize| -> (i128, i64) {
        let gi = roles.group_of[agent].expect("radiate agent has a group");
        let center = roles.centers[gi].as_ref().expect("radiation group has a center");
        (
            center.scaled_sq_distance(state.positions[agent]),
            center.count(),
        )
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (roles.roles[a].tier(), roles.roles[b].tier());
        if ta != tb {
            return ta.cmp(&tb);
        }
        let within = match roles.roles[a] {
            Role::Lead => goal_distance(fields, state, b)
                .cmp(&goal_distance(fields, state, a)),
            Role::Radiate => {
                // Distances from different centers compare as rationals:
                // (ka/ca^2) vs (kb/cb^2)  <=>  ka*cb^2 vs kb*ca^2.
                let (ka, ca) = radiate_key(a);
                let (kb, cb) = radiate_key(b);
                (kb * (ca * ca) as i128).cmp(&(ka * (cb * cb) as i128))
            }
            Role::NonDeadlock | Role::Yield => std::cmp::Ordering::Equal,
        };
        within.then(a.cmp(&b))
    });
    order
}

/// Outcome of one resolution run.
#[derive(Debug, Clone)]
pub struct ResolutionOutcome {
    /// Positions after each executed step.
    pub segment: Vec<Vec<Cell>>,
    /// Count of top-level PIBT fallbacks observed (engine anomalies).
    pub anomalies: usize,
}

/// Execute strategized PIBT for up to `epl` steps (bounded by `step_budget`),
/// mutating `state` in place. Group membership stays frozen from the report;
/// roles, rankings and priorities are rebuilt from live positions each step.
/// Runs the full horizon whether or not deadlocks clear early, stopping only
/// when every agent stands on its goal or the budget runs out.
pub fn resolve_deadlock(
    report: &AnalysisReport,
    state: &mut JointState,
    map: &GridMap,
    fields: &[DistanceField],
    policy: &dyn BasePolicy,
    epl: usize,
    step_budget: usize,
) -> Result<ResolutionOutcome, ResolveError> {
    if report.groups.is_empty() {
        return Err(ResolveError::EmptyReport);
    }
    let mut segment = Vec::new();
    let mut anomalies = 0;
    for _ in 0..epl.min(step_budget) {
        let roles = assign_roles(report, state, fields)?;
        let base = policy.preferences(state, map, fields)?;
        let rankings = build_rankings(&roles, state, fields, map, &base)?;
        let priorities = build_priorities(&roles, state, fields);
        let out = pibt_step(state, &rankings, &priorities, map);
        anomalies += out.fallback_agents.len();
        let conflicts = verify_joint_move(state, map, &out.moves);
        if !conflicts.is_empty() {
            return Err(ResolveError::UnsafeStep(format!("{conflicts:?}")));
        }
        apply_move(state, &out.moves);
        segment.push(state.positions.clone());
        if state.all_arrived() {
            break;
        }
    }
    Ok(ResolutionOutcome { segment, anomalies })
}

/// Advance a state by a verified joint move.
pub fn apply_move(state: &mut JointState, mv: &JointMove) {
    state.positions = mv.targets(&state.positions);
    state.step += 1;
}
