//! Trajectory replay files: JSON-lines with one record per executed step.
//!
//! Line 1 is a `{"meta": ...}` record carrying the tasks and episode
//! configuration, then one `{"step", "positions", "phase"}` record per step,
//! and a final `{"summary": ...}` record with the recorded outcome.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{EpisodeMetrics, TrajectoryStep};
use crate::map::{Cell, ScenarioTask};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReplayTask {
    pub start: [i32; 2],
    pub goal: [i32; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReplayMeta {
    pub map: String,
    pub agents: usize,
    pub analyst: String,
    pub dwl: usize,
    pub epl: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub tasks: Vec<ReplayTask>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub positions: Vec<[i32; 2]>,
    pub phase: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReplaySummary {
    pub success: bool,
    pub episode_length: usize,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },

    #[error("line {line}: unexpected record kind")]
    UnexpectedRecord { line: usize },

    #[error("replay file is missing its {0} record")]
    Missing(&'static str),
}

/// A fully parsed replay file.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub meta: ReplayMeta,
    pub steps: Vec<StepRecord>,
    pub summary: ReplaySummary,
}

pub fn task_to_record(t: &ScenarioTask) -> ReplayTask {
    ReplayTask {
        start: [t.start.x, t.start.y],
        goal: [t.goal.x, t.goal.y],
    }
}

fn cell_pair(c: Cell) -> [i32; 2] {
    [c.x, c.y]
}

/// Write a complete replay: meta, every trajectory step (numbered from 1),
/// then the summary.
pub fn write_replay<W: Write>(
    mut w: W,
    meta: &ReplayMeta,
    trajectory: &[TrajectoryStep],
    metrics: &EpisodeMetrics,
) -> Result<(), ReplayError> {
    serde_json::to_writer(&mut w, &serde_json::json!({ "meta": meta }))
        .map_err(|e| ReplayError::Parse { line: 1, source: e })?;
    w.write_all(b"\n")?;
    for (i, step) in trajectory.iter().enumerate() {
        let record = StepRecord {
            step: i + 1,
            positions: step.positions.iter().copied().map(cell_pair).collect(),
            phase: step.phase.as_str().to_string(),
        };
        serde_json::to_writer(&mut w, &record)
            .map_err(|e| ReplayError::Parse { line: i + 2, source: e })?;
        w.write_all(b"\n")?;
    }
    let summary = ReplaySummary {
        success: metrics.success,
        episode_length: metrics.episode_length,
    };
    serde_json::to_writer(&mut w, &serde_json::json!({ "summary": summary }))
        .map_err(|e| ReplayError::Parse { line: trajectory.len() + 2, source: e })?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Parse a replay file back into its three parts.
pub fn read_replay<R: BufRead>(r: R) -> Result<Replay, ReplayError> {
    let mut meta = None;
    let mut steps = Vec::new();
    let mut summary = None;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed)
            .map_err(|e| ReplayError::Parse { line: idx + 1, source: e })?;
        if let Some(m) = value.get("meta") {
            meta = Some(
                serde_json::from_value(m.clone())
                    .map_err(|e| ReplayError::Parse { line: idx + 1, source: e })?,
            );
        } else if let Some(s) = value.get("summary") {
            summary = Some(
                serde_json::from_value(s.clone())
                    .map_err(|e| ReplayError::Parse { line: idx + 1, source: e })?,
            );
        } else if value.get("step").is_some() {
            steps.push(
                serde_json::from_value(value)
                    .map_err(|e| ReplayError::Parse { line: idx + 1, source: e })?,
            );
        } else {
            return Err(ReplayError::UnexpectedRecord { line: idx + 1 });
        }
    }
    Ok(Replay {
        meta: meta.ok_or(ReplayError::Missing("meta"))?,
        steps,
        summary: summary.ok_or(ReplayError::Missing("summary"))?,
    })
}
