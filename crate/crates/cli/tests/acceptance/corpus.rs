//! Crafted deadlock corpus.
//!
//! Every instance defeats the greedy control arm (PIBT with ascending-id
//! priorities walks into a stable freeze), and the per-instance expectation
//! for the rule analyst was fixed by hand-simulating the engine rules before
//! the implementation was written:
//!
//! * Head-on width-1 corridors with one side pocket: the control arm pushes
//!   the opposing agent into the dead end and stalls forever. Detection
//!   groups the pair; the far agent leads, priority inversion pushes the
//!   near agent back over the pocket, the fixed tie order (Down before
//!   Left/Right) ducks it in, and the corridor clears.
//! * Arrived low-id blockers on a width-1 bridge: the blocker commits Stay
//!   before anyone can inherit through it, freezing the queue. Grouping
//!   attaches the arrived blocker; radiation (near goals) or leader (far
//!   goals) clears the bridge long enough for the queue to cross.
//! * A four-agent variant of the same with goals fanned across the far room
//!   mouth, resolved by radiation.
//! * Two instances the rule strategies cannot solve, kept to pin honest
//!   failures: a sealed 2x2 rotation (no empty vertex, nothing can move) and
//!   a pocketless width-1 swap (physically unsolvable).

use llmdr_core::map::{Cell, GridMap, ScenarioTask};

pub struct CorpusInstance {
    pub name: &'static str,
    pub map: GridMap,
    pub tasks: Vec<ScenarioTask>,
    /// Frozen expectation for analyst=rule at max_steps 256.
    pub expected_rule_success: bool,
}

#[allow(clippy::type_complexity)]
fn tasks_of(pairs: &[((i32, i32), (i32, i32))]) -> Vec<ScenarioTask> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &((sx, sy), (gx, gy)))| ScenarioTask {
            agent_id: i,
            start: Cell::new(sx, sy),
            goal: Cell::new(gx, gy),
            declared_optimal: None,
        })
        .collect()
}

/// Width-1 corridor x=1..length at y=1 with a dead-end pocket at
/// (pocket_x, 2).
fn corridor_map(length: usize, pocket_x: usize, name: &str) -> GridMap {
    let width = length + 2;
    let mut text = format!("type octile\nheight 4\nwidth {width}\nmap\n");
    text.push_str(&"@".repeat(width));
    text.push('\n');
    text.push('@');
    text.push_str(&".".repeat(length));
    text.push_str("@\n");
    text.push_str(&"@".repeat(pocket_x));
    text.push('.');
    text.push_str(&"@".repeat(width - pocket_x - 1));
    text.push('\n');
    text.push_str(&"@".repeat(width));
    text.push('\n');
    GridMap::parse(&text).unwrap().with_name(name)
}

/// Two 3-tall rooms joined by a width-1 bridge at y=2, x=3..7; the right
/// room is long so radiated agents park far from the bridge.
fn bridge_map(name: &str) -> GridMap {
    let text = "type octile\nheight 5\nwidth 22\nmap\n\
        @@@@@@@@@@@@@@@@@@@@@@\n\
        @..@@@@@.............@\n\
        @....................@\n\
        @..@@@@@.............@\n\
        @@@@@@@@@@@@@@@@@@@@@@\n";
    GridMap::parse(text).unwrap().with_name(name)
}

/// Fully sealed 2x2 room.
fn sealed_square(name: &str) -> GridMap {
    GridMap::parse("type octile\nheight 4\nwidth 4\nmap\n@@@@\n@..@\n@..@\n@@@@\n")
        .unwrap()
        .with_name(name)
}

/// Width-1 corridor with no pocket at all.
fn plain_corridor(length: usize, name: &str) -> GridMap {
    let width = length + 2;
    let mut text = format!("type octile\nheight 3\nwidth {width}\nmap\n");
    text.push_str(&"@".repeat(width));
    text.push('\n');
    text.push('@');
    text.push_str(&".".repeat(length));
    text.push_str("@\n");
    text.push_str(&"@".repeat(width));
    text.push('\n');
    GridMap::parse(&text).unwrap().with_name(name)
}

pub fn corpus() -> Vec<CorpusInstance> {
    vec![
        CorpusInstance {
            name: "corridor_len10_pocket4",
            map: corridor_map(10, 4, "corridor_len10_pocket4"),
            tasks: tasks_of(&[((1, 1), (10, 1)), ((10, 1), (1, 1))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "corridor_len11_pocket4",
            map: corridor_map(11, 4, "corridor_len11_pocket4"),
            tasks: tasks_of(&[((1, 1), (11, 1)), ((11, 1), (1, 1))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "corridor_len12_pocket3",
            map: corridor_map(12, 3, "corridor_len12_pocket3"),
            tasks: tasks_of(&[((1, 1), (12, 1)), ((12, 1), (1, 1))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "corridor_len14_pocket5",
            map: corridor_map(14, 5, "corridor_len14_pocket5"),
            tasks: tasks_of(&[((1, 1), (14, 1)), ((14, 1), (1, 1))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "corridor_len10_pocket7_reversed",
            map: corridor_map(10, 7, "corridor_len10_pocket7_reversed"),
            tasks: tasks_of(&[((10, 1), (1, 1)), ((1, 1), (10, 1))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "corridor_len12_pocket9_reversed",
            map: corridor_map(12, 9, "corridor_len12_pocket9_reversed"),
            tasks: tasks_of(&[((12, 1), (1, 1)), ((1, 1), (12, 1))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "arrived_blocker_radiation",
            map: bridge_map("arrived_blocker_radiation"),
            tasks: tasks_of(&[((5, 2), (5, 2)), ((1, 2), (9, 2))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "arrived_blocker_leader",
            map: bridge_map("arrived_blocker_leader"),
            tasks: tasks_of(&[((5, 2), (5, 2)), ((1, 2), (13, 2))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "arrived_blocker_leader_long",
            map: bridge_map("arrived_blocker_leader_long"),
            tasks: tasks_of(&[((5, 2), (5, 2)), ((1, 2), (17, 2))]),
            expected_rule_success: true,
        },
        CorpusInstance {
            // The goals fan out past the bridge exit without sitting on the
            // (8,2) chokepoint itself: an arrived agent there could never be
            // displaced by the lower-priority agents queued behind it.
            name: "radiation_cluster_4",
            map: bridge_map("radiation_cluster_4"),
            tasks: tasks_of(&[
                ((5, 2), (5, 2)),
                ((1, 1), (9, 2)),
                ((1, 2), (9, 1)),
                ((1, 3), (8, 3)),
            ]),
            expected_rule_success: true,
        },
        CorpusInstance {
            name: "sealed_rotation_4",
            map: sealed_square("sealed_rotation_4"),
            tasks: tasks_of(&[
                ((1, 1), (2, 1)),
                ((2, 1), (2, 2)),
                ((2, 2), (1, 2)),
                ((1, 2), (1, 1)),
            ]),
            // No empty vertex: PIBT cannot rotate the cycle and radiation has
            // nowhere to send anyone.
            expected_rule_success: false,
        },
        CorpusInstance {
            name: "impossible_swap",
            map: plain_corridor(6, "impossible_swap"),
            tasks: tasks_of(&[((1, 1), (6, 1)), ((6, 1), (1, 1))]),
            // A width-1 swap with no pocket has no valid solution at all.
            expected_rule_success: false,
        },
    ]
}
