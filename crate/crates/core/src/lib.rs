//! Multi-agent pathfinding engine: grid maps and MovingAI parsers, true
//! distance fields, pluggable base policies, PIBT collision-free stepping,
//! deadlock detection (rule-based and LLM-backed) and strategized resolution,
//! plus the episode loop tying it all together.

pub mod analysis;
pub mod dist;
pub mod episode;
pub mod llm;
pub mod map;
pub mod mockchat;
pub mod pibt;
pub mod policy;
pub mod replay;
pub mod resolve;

pub use analysis::{
    analyze_rule_based, AnalysisReport, DeadlockGroup, DetectionWindow, ReportSource, Solution,
};
pub use dist::{build_distance_field, rank_actions_toward, DistanceField};
pub use episode::{
    run_episode, simulate_plan, Analyst, AnalystMode, EpisodeMetrics, EpisodeOptions,
    EpisodeOutcome, ExecutionPlan, Phase, TrajectoryStep, DEFAULT_DWL, DEFAULT_EPL,
    DEFAULT_MAX_STEPS,
};
pub use llm::{render_prompt, LlmAnalyst, LlmConfig, LlmTranscript, RateLimiter, API_KEY_ENV};
pub use map::{manhattan, parse_scenario, Action, Cell, GridMap, MapError, ScenarioTask};
pub use pibt::{pibt_step, verify_joint_move, Conflict, JointMove};
pub use policy::{
    ActionRanking, BasePolicy, GreedyPolicy, JointState, NoisyGreedyPolicy, PolicySpec,
};
pub use resolve::{
    assign_roles, build_priorities, build_rankings, resolve_deadlock, Role, RoleAssignment,
};
