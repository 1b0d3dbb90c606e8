//! Per-goal true-distance fields.
//!
//! One breadth-first search per goal gives the exact shortest-path distance
//! from every passable cell, used as the heuristic by the base policy, by
//! lead agents during resolution, and by tie-breaking everywhere else.

use thiserror::Error;

use crate::map::{Action, Cell, GridMap, MapError};
use crate::policy::ActionRanking;

#[derive(Debug, Error)]
pub enum DistError {
    #[error(transparent)]
    Map(#[from] MapError),

    #[error("cell {0} cannot reach the goal {1}")]
    Unreachable(Cell, Cell),
}

/// True shortest-path distance to a fixed goal for every cell of a map.
/// `None` means blocked or unreachable. Immutable once built.
#[derive(Debug, Clone)]
pub struct DistanceField {
    goal: Cell,
    width: usize,
    height: usize,
    dist: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn goal(&self) -> Cell {
        self.goal
    }

    /// Distance from `c` to the goal, `None` if `c` is blocked, out of
    /// bounds, or walled off from the goal.
    pub fn get(&self, c: Cell) -> Option<u32> {
        if c.x < 0 || c.y < 0 {
            return None;
        }
        let (x, y) = (c.x as usize, c.y as usize);
        if x >= self.width || y >= self.height {
            return None;
        }
        self.dist[y * self.width + x]
    }
}

/// Breadth-first true distance from every passable cell to `goal`.
pub fn build_distance_field(map: &GridMap, goal: Cell) -> Result<DistanceField, MapError> {
    if !map.is_passable(goal) {
        return Err(MapError::ImpassableCell(goal));
    }
    let mut dist: Vec<Option<u32>> = vec![None; map.n_cells()];
    dist[map.index(goal)] = Some(0);
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(goal);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)].unwrap();
        for a in [Action::Up, Action::Down, Action::Left, Action::Right] {
            let n = a.apply(c);
            if map.is_passable(n) && dist[map.index(n)].is_none() {
                dist[map.index(n)] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    Ok(DistanceField {
        goal,
        width: map.width(),
        height: map.height(),
        dist,
    })
}

/// Rank the five actions from `c` by ascending true distance of the resulting
/// cell. Blocked or out-of-bounds results sort last (below Stay, whose result
/// always has a finite distance here); ties break in the fixed action order
/// Up, Down, Left, Right, Stay. Errors if `c` itself cannot reach the goal.
pub fn rank_actions_toward(field: &DistanceField, c: Cell) -> Result<ActionRanking, DistError> {
    if field.get(c).is_none() {
        return Err(DistError::Unreachable(c, field.goal()));
    }
    let mut actions = Action::ALL;
    // Stable sort keeps the fixed order among equal keys.
    actions.sort_by_key(|a| field.get(a.apply(c)).map_or(u64::MAX, u64::from));
    Ok(ActionRanking::new(actions))
}
