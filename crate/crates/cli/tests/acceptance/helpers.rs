//! Shared helpers for the acceptance suite.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use llmdr_core::map::GridMap;

/// Seeded random obstacle map within the fuzz envelope (obstacle density is
/// drawn from 10-25%). Cell (0,0) is always open.
pub fn random_map(seed: u64, width: usize, height: usize, density: f64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocked: Vec<bool> = (0..width * height)
        .map(|_| rng.random_bool(density))
        .collect();
    blocked[0] = false;
    GridMap::new(width, height, blocked, format!("rand{seed}")).unwrap()
}

pub fn write_map(dir: &Path, name: &str, map: &GridMap) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, map.to_map_text()).unwrap();
    path
}
