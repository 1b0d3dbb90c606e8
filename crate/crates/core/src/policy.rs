//! Pluggable base policies.
//!
//! A base policy stands in for a learned MAPF model: given the joint state it
//! emits, per agent, a preference ranking over the five one-step actions. Any
//! implementation that returns valid rankings is pluggable; the built-ins are
//! a greedy shortest-path policy and a seeded noisy variant.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dist::{rank_actions_toward, DistanceField};
use crate::map::{Action, Cell, GridMap};

/// An ordered preference over the five actions; each action appears exactly
/// once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionRanking {
    actions: [Action; 5],
}

impl ActionRanking {
    /// Panics if the five actions are not distinct.
    pub fn new(actions: [Action; 5]) -> Self {
        for i in 0..5 {
            for j in (i + 1)..5 {
                assert_ne!(actions[i], actions[j], "duplicate action in ranking");
            }
        }
        ActionRanking { actions }
    }

    pub fn actions(&self) -> [Action; 5] {
        self.actions
    }

    pub fn first(&self) -> Action {
        self.actions[0]
    }

    /// A new ranking with `promoted` moved to the front, the rest keeping
    /// their relative order.
    pub fn promote(&self, promoted: Action) -> Self {
        let mut out = [promoted; 5];
        let mut k = 1;
        for a in self.actions {
            if a != promoted {
                out[k] = a;
                k += 1;
            }
        }
        ActionRanking { actions: out }
    }
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("agents {0} and {1} occupy the same cell {2}")]
    SharedCell(usize, usize, Cell),

    #[error("agent {agent}: {which} cell {cell} is blocked or out of bounds")]
    ImpassableCell {
        agent: usize,
        which: &'static str,
        cell: Cell,
    },

    #[error("positions and goals differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Positions and goals of every agent at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub positions: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub step: usize,
}

impl JointState {
    pub fn new(
        positions: Vec<Cell>,
        goals: Vec<Cell>,
        step: usize,
        map: &GridMap,
    ) -> Result<Self, StateError> {
        if positions.len() != goals.len() {
            return Err(StateError::LengthMismatch(positions.len(), goals.len()));
        }
        for (i, &p) in positions.iter().enumerate() {
            if !map.is_passable(p) {
                return Err(StateError::ImpassableCell {
                    agent: i,
                    which: "position",
                    cell: p,
                });
            }
            for (j, &q) in positions.iter().enumerate().take(i) {
                if p == q {
                    return Err(StateError::SharedCell(j, i, p));
                }
            }
        }
        for (i, &g) in goals.iter().enumerate() {
            if !map.is_passable(g) {
                return Err(StateError::ImpassableCell {
                    agent: i,
                    which: "goal",
                    cell: g,
                });
            }
        }
        Ok(JointState {
            positions,
            goals,
            step,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }

    /// True when every agent stands on its goal simultaneously.
    pub fn all_arrived(&self) -> bool {
        self.positions == self.goals
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("agent {agent} at {position} cannot reach its goal {goal}")]
    UnreachableGoal {
        agent: usize,
        position: Cell,
        goal: Cell,
    },
}

/// The base-model interface: rankings for all agents, ordered by agent id.
///
/// Implementations must be deterministic given (state, configuration, seed);
/// the built-ins only look at each agent's own position and goal, but the
/// full joint state is available for observation-limited policies.
pub trait BasePolicy {
    fn name(&self) -> &str;

    fn preferences(
        &self,
        state: &JointState,
        map: &GridMap,
        fields: &[DistanceField],
    ) -> Result<Vec<ActionRanking>, PolicyError>;
}

/// Greedy shortest-path policy: every agent ranks actions by the true
/// distance of the resulting cell to its own goal.
#[derive(Debug, Clone, Default)]
pub struct GreedyPolicy;

impl BasePolicy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn preferences(
        &self,
        state: &JointState,
        _map: &GridMap,
        fields: &[DistanceField],
    ) -> Result<Vec<ActionRanking>, PolicyError> {
        state
            .positions
            .iter()
            .enumerate()
            .map(|(i, &pos)| {
                rank_actions_toward(&fields[i], pos).map_err(|_| PolicyError::UnreachableGoal {
                    agent: i,
                    position: pos,
                    goal: state.goals[i],
                })
            })
            .collect()
    }
}

/// Greedy with seeded noise: with probability `swap_prob`, per agent per
/// step, the top two ranked actions are swapped. The draw depends only on
/// (seed, step, agent), so identical states give identical rankings.
#[derive(Debug, Clone)]
pub struct NoisyGreedyPolicy {
    pub swap_prob: f64,
    pub seed: u64,
}

impl BasePolicy for NoisyGreedyPolicy {
    fn name(&self) -> &str {
        "greedy-noisy"
    }

    fn preferences(
        &self,
        state: &JointState,
        map: &GridMap,
        fields: &[DistanceField],
    ) -> Result<Vec<ActionRanking>, PolicyError> {
        let mut rankings = GreedyPolicy.preferences(state, map, fields)?;
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (state.step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        for ranking in rankings.iter_mut() {
            let draw: f64 = rng.random();
            if draw < self.swap_prob {
                let mut actions = ranking.actions();
                actions.swap(0, 1);
                *ranking = ActionRanking::new(actions);
            }
        }
        Ok(rankings)
    }
}

/// Policy selection by name + parameters, as it appears in run configs:
/// `greedy` or `greedy-noisy:<p>`.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Greedy,
    GreedyNoisy { swap_prob: f64 },
}

impl PolicySpec {
    pub fn build(&self, seed: u64) -> Box<dyn BasePolicy + Send + Sync> {
        match self {
            PolicySpec::Greedy => Box::new(GreedyPolicy),
            PolicySpec::GreedyNoisy { swap_prob } => Box::new(NoisyGreedyPolicy {
                swap_prob: *swap_prob,
                seed,
            }),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "greedy" {
            return Ok(PolicySpec::Greedy);
        }
        if let Some(p) = s.strip_prefix("greedy-noisy:") {
            let swap_prob: f64 = p
                .parse()
                .map_err(|_| format!("invalid noise probability {p:?}"))?;
            if !(0.0..=1.0).contains(&swap_prob) {
                return Err(format!("noise probability {swap_prob} out of [0, 1]"));
            }
            return Ok(PolicySpec::GreedyNoisy { swap_prob });
        }
        Err(format!("unknown policy {s:?} (expected greedy or greedy-noisy:<p>)"))
    }
}
