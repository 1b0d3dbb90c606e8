//! Seeded random task generation: distinct starts, distinct goals, every goal
//! reachable from its start. Lets desk-scale benchmarks run without scenario
//! files; the same seed always yields the same tasks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use llmdr_core::map::{Cell, GridMap, ScenarioTask};

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error("map has only {available} passable cells, cannot place {requested} agents")]
    NotEnoughCells { requested: usize, available: usize },

    #[error("could not place {requested} agents after {attempts} attempts (map too fragmented)")]
    PlacementFailed { requested: usize, attempts: usize },
}

/// Connected-component label per passable cell (flood fill over 4-neighbors).
fn component_labels(map: &GridMap) -> Vec<Option<usize>> {
    let mut labels: Vec<Option<usize>> = vec![None; map.n_cells()];
    let mut next = 0usize;
    for start in map.passable_cells() {
        if labels[map.index(start)].is_some() {
            continue;
        }
        let label = next;
        next += 1;
        let mut stack = vec![start];
        labels[map.index(start)] = Some(label);
        while let Some(c) = stack.pop() {
            for n in map.neighbors(c).unwrap() {
                if labels[map.index(n)].is_none() {
                    labels[map.index(n)] = Some(label);
                    stack.push(n);
                }
            }
        }
    }
    labels
}

/// Sample `n_agents` tasks with pairwise-distinct starts and goals, each goal
/// in its start's connected component.
pub fn random_tasks(
    map: &GridMap,
    n_agents: usize,
    seed: u64,
) -> Result<Vec<ScenarioTask>, TaskGenError> {
    let passable: Vec<Cell> = map.passable_cells().collect();
    if passable.len() < n_agents {
        return Err(TaskGenError::NotEnoughCells {
            requested: n_agents,
            available: passable.len(),
        });
    }
    let labels = component_labels(map);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let max_attempts = 200 * n_agents.max(1);
    let mut attempts = 0;
    'retry: loop {
        attempts += 1;
        if attempts > max_attempts {
            return Err(TaskGenError::PlacementFailed {
                requested: n_agents,
                attempts,
            });
        }

        // Distinct starts: shuffled prefix of the passable cells.
        let mut cells = passable.clone();
        for i in 0..n_agents {
            let j = rng.random_range(i..cells.len());
            cells.swap(i, j);
        }
        let starts = &cells[..n_agents];

        let mut goals: Vec<Cell> = Vec::with_capacity(n_agents);
        for &start in starts {
            let label = labels[map.index(start)];
            let candidates: Vec<Cell> = passable
                .iter()
                .copied()
                .filter(|&c| labels[map.index(c)] == label && !goals.contains(&c))
                .collect();
            if candidates.is_empty() {
                continue 'retry;
            }
            goals.push(candidates[rng.random_range(0..candidates.len())]);
        }

        return Ok(starts
            .iter()
            .zip(goals)
            .enumerate()
            .map(|(agent_id, (&start, goal))| ScenarioTask {
                agent_id,
                start,
                goal,
                declared_optimal: None,
            })
            .collect());
    }
}

/// Stable mixing of a base seed with per-cell coordinates, so episode seeds
/// are independent of which other cells run.
pub fn derive_seed(base: u64, agents: usize, episode: usize) -> u64 {
    let mut x = base
        .wrapping_add((agents as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((episode as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    // splitmix64 finalizer
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}
