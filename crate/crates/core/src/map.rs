//! Grid map and scenario representation, plus MovingAI benchmark parsers.
//!
//! Maps are 4-connected grids with static obstacles. Coordinates follow the
//! `.scen` convention: `x` is the column, `y` the row, origin at the top-left.

use std::fmt;

use thiserror::Error;

/// A grid coordinate. `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Manhattan distance between two cells.
pub fn manhattan(a: Cell, b: Cell) -> u32 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// Chebyshev distance (used for the square inspection area around an agent).
pub fn chebyshev(a: Cell, b: Cell) -> u32 {
    a.x.abs_diff(b.x).max(a.y.abs_diff(b.y))
}

/// The five one-step actions. `ALL` fixes the global tie-breaking order used
/// everywhere a ranking has to break ties deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }

    /// The cell reached by taking this action from `from`.
    pub fn apply(self, from: Cell) -> Cell {
        let (dx, dy) = self.delta();
        Cell::new(from.x + dx, from.y + dy)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Stay => "stay",
        };
        f.write_str(s)
    }
}

/// Errors from parsing or querying a map.
#[derive(Debug, Error)]
pub enum MapError {
    #[error("malformed header on line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },

    #[error("row count mismatch: header says {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },

    #[error("row width mismatch on line {line}: header says {expected}, found {found}")]
    RowWidthMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown terrain character {ch:?} on line {line}")]
    UnknownTerrain { line: usize, ch: char },

    #[error("map has no passable cell")]
    NoPassableCells,

    #[error("map dimensions must be at least 1x1")]
    EmptyDimensions,

    #[error("blocked grid has {found} entries, expected {expected}")]
    GridSizeMismatch { expected: usize, found: usize },

    #[error("cell {0} is blocked or out of bounds")]
    ImpassableCell(Cell),
}

/// Static obstacle grid. Immutable after construction; safe to share across
/// concurrent episode runners.
#[derive(Debug, Clone)]
pub struct GridMap {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    name: String,
}

impl GridMap {
    /// Build a map from a row-major blocked grid.
    pub fn new(
        width: usize,
        height: usize,
        blocked: Vec<bool>,
        name: impl Into<String>,
    ) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::EmptyDimensions);
        }
        if blocked.len() != width * height {
            return Err(MapError::GridSizeMismatch {
                expected: width * height,
                found: blocked.len(),
            });
        }
        if blocked.iter().all(|&b| b) {
            return Err(MapError::NoPassableCells);
        }
        Ok(GridMap {
            width,
            height,
            blocked,
            name: name.into(),
        })
    }

    /// Parse the MovingAI `.map` format:
    ///
    /// ```text
    /// type octile
    /// height H
    /// width W
    /// map
    /// <H rows of W terrain characters>
    /// ```
    ///
    /// Passable terrain: `.`, `G`, `S`. Blocked terrain: `@`, `O`, `T`, `W`.
    /// Any other character is an error. Trailing whitespace per line is
    /// ignored; row and column counts must match the header.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut lines = text.lines().enumerate();

        let mut header_line = |prefix: &str| -> Result<(usize, String), MapError> {
            match lines.next() {
                Some((idx, line)) => {
                    let trimmed = line.trim_end();
                    match trimmed.strip_prefix(prefix) {
                        Some(rest) => Ok((idx + 1, rest.trim().to_string())),
                        None => Err(MapError::MalformedHeader {
                            line: idx + 1,
                            reason: format!("expected line starting with {prefix:?}, got {trimmed:?}"),
                        }),
                    }
                }
                None => Err(MapError::MalformedHeader {
                    line: 0,
                    reason: format!("missing {prefix:?} line"),
                }),
            }
        };

        let _ = header_line("type")?;
        let (hline, hval) = header_line("height")?;
        let height: usize = hval.parse().map_err(|_| MapError::MalformedHeader {
            line: hline,
            reason: format!("invalid height {hval:?}"),
        })?;
        let (wline, wval) = header_line("width")?;
        let width: usize = wval.parse().map_err(|_| MapError::MalformedHeader {
            line: wline,
            reason: format!("invalid width {wval:?}"),
        })?;
        match lines.next() {
            Some((_, line)) if line.trim_end() == "map" => {}
            Some((idx, line)) => {
                return Err(MapError::MalformedHeader {
                    line: idx + 1,
                    reason: format!("expected \"map\", got {:?}", line.trim_end()),
                })
            }
            None => {
                return Err(MapError::MalformedHeader {
                    line: 4,
                    reason: "missing \"map\" line".to_string(),
                })
            }
        }

        let mut blocked = Vec::with_capacity(width * height);
        let mut rows = 0usize;
        for (idx, line) in lines {
            let row = line.trim_end();
            if row.is_empty() {
                continue;
            }
            if rows == height {
                return Err(MapError::RowCountMismatch {
                    expected: height,
                    found: rows + 1,
                });
            }
            if row.chars().count() != width {
                return Err(MapError::RowWidthMismatch {
                    line: idx + 1,
                    expected: width,
                    found: row.chars().count(),
                });
            }
            for ch in row.chars() {
                match ch {
                    '.' | 'G' | 'S' => blocked.push(false),
                    '@' | 'O' | 'T' | 'W' => blocked.push(true),
                    other => {
                        return Err(MapError::UnknownTerrain {
                            line: idx + 1,
                            ch: other,
                        })
                    }
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(MapError::RowCountMismatch {
                expected: height,
                found: rows,
            });
        }
        GridMap::new(width, height, blocked, "")
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    /// Row-major index of an in-bounds cell.
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.in_bounds(c));
        c.y as usize * self.width + c.x as usize
    }

    pub fn is_passable(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked[self.index(c)]
    }

    /// Passable 4-neighbors of `c` in the fixed order Up, Down, Left, Right.
    /// `c` itself is never included; waiting is the fifth action, not a
    /// neighbor. Errors if `c` is blocked or out of bounds.
    pub fn neighbors(&self, c: Cell) -> Result<Vec<Cell>, MapError> {
        if !self.is_passable(c) {
            return Err(MapError::ImpassableCell(c));
        }
        Ok([Action::Up, Action::Down, Action::Left, Action::Right]
            .iter()
            .map(|a| a.apply(c))
            .filter(|&n| self.is_passable(n))
            .collect())
    }

    /// All passable cells in row-major order.
    pub fn passable_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| {
                let c = Cell::new(x as i32, y as i32);
                if self.is_passable(c) {
                    Some(c)
                } else {
                    None
                }
            })
        })
    }

    /// Serialize back to MovingAI format with the normalized terrain alphabet
    /// (`.` passable, `@` blocked). Reparsing reproduces the same grid.
    pub fn to_map_text(&self) -> String {
        let mut out = String::with_capacity(self.n_cells() + self.height + 64);
        out.push_str("type octile\n");
        out.push_str(&format!("height {}\n", self.height));
        out.push_str(&format!("width {}\n", self.width));
        out.push_str("map\n");
        for y in 0..self.height {
            for x in 0..self.width {
                let idx = y * self.width + x;
                out.push(if self.blocked[idx] { '@' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

/// One agent's task: where it starts and where it must end up.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTask {
    pub agent_id: usize,
    pub start: Cell,
    pub goal: Cell,
    /// Optimal path length declared by the scenario file, when present.
    pub declared_optimal: Option<f64>,
}

/// Errors from parsing a MovingAI `.scen` file against a map.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("missing version header")]
    MissingVersion,

    #[error("malformed entry on line {line}: {reason}")]
    MalformedEntry { line: usize, reason: String },

    #[error("insufficient tasks: requested {requested}, file has {available}")]
    InsufficientTasks { requested: usize, available: usize },

    #[error("agent {agent}: {which} cell {cell} is blocked or out of bounds")]
    ImpassableEndpoint {
        agent: usize,
        which: &'static str,
        cell: Cell,
    },

    #[error("line {line}: scenario says map is {scen_w}x{scen_h}, map is {map_w}x{map_h}")]
    MapDimensionMismatch {
        line: usize,
        scen_w: usize,
        scen_h: usize,
        map_w: usize,
        map_h: usize,
    },

    #[error("agents {a} and {b} share the same {which} cell {cell}")]
    DuplicateEndpoint {
        a: usize,
        b: usize,
        which: &'static str,
        cell: Cell,
    },
}

/// Parse a `.scen` file and return the first `n_agents` tasks in file order,
/// with `agent_id` assigned by line order (0-based). Starts and goals are
/// validated against the map; duplicate starts or duplicate goals across the
/// selected prefix are rejected.
pub fn parse_scenario(
    text: &str,
    map: &GridMap,
    n_agents: usize,
) -> Result<Vec<ScenarioTask>, ScenarioError> {
    let mut lines = text.lines().enumerate();

    loop {
        match lines.next() {
            Some((_, line)) => {
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                if trimmed.starts_with("version") {
                    break;
                }
                return Err(ScenarioError::MissingVersion);
            }
            None => return Err(ScenarioError::MissingVersion),
        }
    }

    let mut tasks = Vec::with_capacity(n_agents);
    for (idx, line) in lines {
        if tasks.len() == n_agents {
            break;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parts: Vec<&str> = trimmed.split('\t').collect();
        if parts.len() < 8 {
            return Err(ScenarioError::MalformedEntry {
                line: idx + 1,
                reason: format!("expected at least 8 tab-separated fields, got {}", parts.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<i64, ScenarioError> {
            parts[i].trim().parse().map_err(|_| ScenarioError::MalformedEntry {
                line: idx + 1,
                reason: format!("invalid {name}: {:?}", parts[i]),
            })
        };
        let scen_w = field(2, "map width")? as usize;
        let scen_h = field(3, "map height")? as usize;
        if scen_w != map.width() || scen_h != map.height() {
            return Err(ScenarioError::MapDimensionMismatch {
                line: idx + 1,
                scen_w,
                scen_h,
                map_w: map.width(),
                map_h: map.height(),
            });
        }
        let start = Cell::new(field(4, "start x")? as i32, field(5, "start y")? as i32);
        let goal = Cell::new(field(6, "goal x")? as i32, field(7, "goal y")? as i32);
        let declared_optimal = if parts.len() > 8 {
            Some(parts[8].trim().parse().map_err(|_| ScenarioError::MalformedEntry {
                line: idx + 1,
                reason: format!("invalid optimal length: {:?}", parts[8]),
            })?)
        } else {
            None
        };

        let agent_id = tasks.len();
        if !map.is_passable(start) {
            return Err(ScenarioError::ImpassableEndpoint {
                agent: agent_id,
                which: "start",
                cell: start,
            });
        }
        if !map.is_passable(goal) {
            return Err(ScenarioError::ImpassableEndpoint {
                agent: agent_id,
                which: "goal",
                cell: goal,
            });
        }
        tasks.push(ScenarioTask {
            agent_id,
            start,
            goal,
            declared_optimal,
        });
    }

    if tasks.len() < n_agents {
        return Err(ScenarioError::InsufficientTasks {
            requested: n_agents,
            available: tasks.len(),
         });
    }

    for i in 0..tasks.len() {
        for j in (i + 1)..tasks.len() {
            if tasks[i].start == tasks[j].start {
                return Err(ScenarioError::DuplicateEndpoint {
                    a: i,
                    b: j,
                    which: "start",
                    cell: tasks[i].start,
                });
            }
            if tasks[i].goal == tasks[j].goal {
                return Err(ScenarioError::DuplicateEndpoint {
                    a: i,
                    b: j,
                    which: "goal",
                    cell: tasks[i].goal,
                });
            }
        }
    }

    Ok(tasks)
}
