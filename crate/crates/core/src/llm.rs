//! LLM-backed deadlock analyst.
//!
//! Renders the detection prompt from a window, calls an OpenAI-compatible
//! chat-completions endpoint, parses and validates the JSON verdict, and
//! falls back to the rule-based analyst on any failure so an episode never
//! stalls on the network.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    analyze_rule_based, AnalysisReport, DeadlockGroup, DetectionWindow, ReportSource, Solution,
};
use crate::dist::DistanceField;

/// Environment variable holding the bearer token for the endpoint.
pub const API_KEY_ENV: &str = "LLMDR_API_KEY";

/// Connection settings for the chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct LlmConfig {
    /// Base URL; `/v1/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Bearer token, normally from `LLMDR_API_KEY`.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// Base delay for exponential backoff between retries.
    pub backoff: Duration,
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        LlmConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            temperature: 0.0,
            backoff: Duration::from_millis(250),
        }
    }
}

/// Audit record of one analyst call, success or failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmTranscript {
    pub prompt: String,
    pub response: Option<String>,
    pub outcome: String,
    pub attempts: u32,
    pub latency_ms: u128,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("network: {0}")]
    Network(String),

    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("http status {0}")]
    Status(u16),

    #[error("malformed response envelope: {0}")]
    Envelope(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum VerdictError {
    #[error("no JSON value found in response")]
    NoJson,

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unknown agent id {0} (not in the inspection set)")]
    UnknownAgent(u64),

    #[error("agent {0} appears in more than one group")]
    Overlap(usize),
}

/// Simple global limiter: at most `rps` requests per second across all
/// episodes sharing it.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_allowed: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        let rps = requests_per_second.max(0.001);
        RateLimiter {
            min_interval: Duration::from_secs_f64(1.0 / rps),
            next_allowed: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_allowed.lock().unwrap();
            let now = Instant::now();
            if *next <= now {
                *next = now + self.min_interval;
                Duration::ZERO
            } else {
                let wait = *next - now;
                *next += self.min_interval;
                wait
            }
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

const PROMPT_HEADER: &str = "You are given {detection_window_length} action logs of agents to detect deadlocks.

Follow these steps in order:

1. Classify deadlocks:
- Detect agents that are exhibiting deadlock conditions.
- Deadlock conditions: No movement, Wandering
- Not deadlocks: Always \"Arrived\", Arrived and stationary, Consistent movement

2. Group deadlocked agents:
- Group deadlocked agents that are within a 2-Manhattan distance of each other.
- If a deadlocked agent is within a 2-Manhattan distance of an already arrived agent, include them in the same group.

3. Provide solutions:
- Use the \"leader\" method for independently deadlocked agents or when any agent in the group has a goal more than 8 Manhattan units away.
- Use the \"radiation\" method when all agents in the group are near their goals (less than 8 units) and likely to experience repeated deadlocks.

Below are the {detection_window_length} action logs of agents.

{detection_window}

Provide the agent group status in this JSON format:
{
\"agent_id\": [Agent IDs in the same group],
\"solution\": \"leader\" or \"radiation\"
}";

/// Render the detection prompt for the inspected agents. Deterministic:
/// agents sorted by id, coordinates formatted `(x,y)`, an `Arrived` marker on
/// every step an agent stands on its goal.
pub fn render_prompt(window: &DetectionWindow, inspected: &BTreeSet<usize>) -> String {
    let mut log = String::new();
    for &agent in inspected {
        let row = window.row(agent);
        log.push_str(&format!("Agent {}:\nGoal: {}\n", row.agent_id, row.goal));
        for (t, &pos) in row.positions.iter().enumerate() {
            if pos == row.goal {
                log.push_str(&format!("Step {t}: {pos} Arrived\n"));
            } else {
                log.push_str(&format!("Step {t}: {pos}\n"));
            }
        }
        log.push('\n');
    }
    PROMPT_HEADER
        .replace("{detection_window_length}", &window.len().to_string())
        .replace("{detection_window}", log.trim_end())
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChatUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

struct CallResult {
    content: String,
    attempts: u32,
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

/// POST the prompt to `{endpoint}/v1/chat/completions`, retrying 429/5xx and
/// transport failures with exponential backoff. Returns the first choice's
/// message content.
fn call_llm(agent: &ureq::Agent, config: &LlmConfig, prompt: &str) -> Result<CallResult, LlmError> {
    let url = format!(
        "{}/v1/chat/completions",
        config.endpoint.trim_end_matches('/')
    );
    let body = serde_json::json!({
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    });

    let mut last_failure = String::new();
    let mut attempts = 0;
    for attempt in 0..=config.max_retries {
        attempts = attempt + 1;
        if attempt > 0 {
            std::thread::sleep(config.backoff * 2u32.pow(attempt - 1));
        }
        let mut request = agent.post(&url);
        if let Some(key) = &config.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        match request.send_json(&body) {
            Ok(mut response) => {
                let status = response.status().as_u16();
                if (200..300).contains(&status) {
                    let text = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| LlmError::Network(e.to_string()))?;
                    let envelope: ChatCompletion = serde_json::from_str(&text)
                        .map_err(|e| LlmError::Envelope(e.to_string()))?;
                    let content = envelope
                        .choices
                        .first()
                        .and_then(|c| c.message.content.clone())
                        .ok_or_else(|| {
                            LlmError::Envelope("no choices[0].message.content".to_string())
                        })?;
                    let (pt, ct) = envelope
                        .usage
                        .map(|u| (u.prompt_tokens, u.completion_tokens))
                        .unwrap_or((None, None));
                    return Ok(CallResult {
                        content,
                        attempts,
                        prompt_tokens: pt,
                        completion_tokens: ct,
                    });
                }
                if status == 429 || (500..600).contains(&status) {
                    last_failure = format!("http status {status}");
                    continue;
                }
                return Err(LlmError::Status(status));
            }
            Err(e) => {
                last_failure = e.to_string();
                continue;
            }
        }
    }
    Err(LlmError::RetriesExhausted {
        attempts,
        last: last_failure,
    })
}

/// Extract the first JSON value (object or array of objects) from free text,
/// tolerating code fences and surrounding prose, and validate it into
/// deadlock groups against the inspection set.
pub fn parse_verdict(
    raw: &str,
    inspected: &BTreeSet<usize>,
) -> Result<Vec<DeadlockGroup>, VerdictError> {
    let value = first_json_value(raw).ok_or(VerdictError::NoJson)?;
    let objects: Vec<serde_json::Value> = match value {
        serde_json::Value::Array(items) => items,
        obj @ serde_json::Value::Object(_) => vec![obj],
        _ => return Err(VerdictError::NoJson),
    };

    let mut groups = Vec::new();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    for obj in objects {
        let map = obj
            .as_object()
            .ok_or_else(|| VerdictError::Schema("group is not an object".to_string()))?;
        let ids_value = map
            .get("agent_id")
            .ok_or_else(|| VerdictError::Schema("missing agent_id".to_string()))?;
        let raw_ids: Vec<u64> = match ids_value {
            serde_json::Value::Array(items) => items
                .iter()
                .map(|v| {
                    v.as_u64()
                        .ok_or_else(|| VerdictError::Schema(format!("agent id {v} is not an integer")))
                })
                .collect::<Result<_, _>>()?,
            serde_json::Value::Number(n) => {
                vec![n
                    .as_u64()
                    .ok_or_else(|| VerdictError::Schema(format!("agent id {n} is not an integer")))?]
            }
            other => {
                return Err(VerdictError::Schema(format!(
                    "agent_id must be an array of integers, got {other}"
                )))
            }
        };
        if raw_ids.is_empty() {
            return Err(VerdictError::Schema("empty agent_id list".to_string()));
        }
        let solution = match map
            .get("solution")
            .and_then(|v| v.as_str())
            .map(|s| s.to_ascii_lowercase())
            .as_deref()
        {
            Some("leader") => Solution::Leader,
            Some("radiation") => Solution::Radiation,
            other => {
                return Err(VerdictError::Schema(format!(
                    "solution must be \"leader\" or \"radiation\", got {other:?}"
                )))
            }
        };
        let mut agent_ids = BTreeSet::new();
        for id in raw_ids {
            if !inspected.contains(&(id as usize)) {
                return Err(VerdictError::UnknownAgent(id));
            }
            let id = id as usize;
            if !seen.insert(id) {
                return Err(VerdictError::Overlap(id));
            }
            agent_ids.insert(id);
        }
        groups.push(DeadlockGroup {
            agent_ids,
            solution,
        });
    }
    Ok(groups)
}

/// First complete JSON object or array embedded anywhere in the text.
fn first_json_value(raw: &str) -> Option<serde_json::Value> {
    for (i, ch) in raw.char_indices() {
        if ch != '{' && ch != '[' {
            continue;
        }
        let mut stream =
            serde_json::Deserializer::from_str(&raw[i..]).into_iter::<serde_json::Value>();
        if let Some(Ok(v)) = stream.next() {
            if v.is_object() || v.is_array() {
                return Some(v);
            }
        }
    }
    None
}

/// The LLM analyst: renders, calls, parses; on any failure returns the
/// rule-based analyst's report with the fallback reason in its provenance.
/// Every call appends a transcript.
pub struct LlmAnalyst {
    config: LlmConfig,
    agent: ureq::Agent,
    limiter: Option<Arc<RateLimiter>>,
    pub transcripts: Vec<LlmTranscript>,
}

impl LlmAnalyst {
    pub fn new(config: LlmConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build();
        LlmAnalyst {
            config,
            agent: agent_config.into(),
            limiter: None,
            transcripts: Vec::new(),
        }
    }

    pub fn with_rate_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Analyze one window. Never fails: the rule analyst is the fallback for
    /// every error class, with provenance tags
    /// `fallback: network|http|envelope|parse|schema|overlap`.
    pub fn analyze(
        &mut self,
        window: &DetectionWindow,
        fields: &[DistanceField],
        inspected: &BTreeSet<usize>,
    ) -> AnalysisReport {
        let prompt = render_prompt(window, inspected);
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let started = Instant::now();
        let called = call_llm(&self.agent, &self.config, &prompt);
        let latency_ms = started.elapsed().as_millis();

        match called {
            Ok(result) => match parse_verdict(&result.content, inspected) {
                Ok(groups) => {
                    let report = AnalysisReport {
                        groups,
                        inspected: inspected.clone(),
                        source: ReportSource::Llm,
                        provenance: format!("llm: {}", self.config.model),
                    };
                    debug_assert!(report.validate().is_ok());
                    self.transcripts.push(LlmTranscript {
                        prompt,
                        response: Some(result.content),
                        outcome: "ok".to_string(),
                        attempts: result.attempts,
                        latency_ms,
                        prompt_tokens: result.prompt_tokens,
                        completion_tokens: result.completion_tokens,
                    });
                    report
                }
                Err(verdict_err) => {
                    let tag = match &verdict_err {
                        VerdictError::NoJson => "fallback: parse",
                        VerdictError::Schema(_) => "fallback: schema",
                        VerdictError::UnknownAgent(_) => "fallback: schema",
                        VerdictError::Overlap(_) => "fallback: overlap",
                    };
                    let provenance = format!("{tag} ({verdict_err})");
                    self.transcripts.push(LlmTranscript {
                        prompt,
                        response: Some(result.content),
                        outcome: provenance.clone(),
                        attempts: result.attempts,
                        latency_ms,
                        prompt_tokens: result.prompt_tokens,
                        completion_tokens: result.completion_tokens,
                    });
                    self.rule_fallback(window, fields, inspected, provenance)
                }
            },
            Err(call_err) => {
                let tag = match &call_err {
                    LlmError::Network(_) => "fallback: network",
                    LlmError::RetriesExhausted { last, .. } => {
                        if last.starts_with("http status") {
                            "fallback: http"
                        } else {
                            "fallback: network"
                        }
                    }
                    LlmError::Status(_) => "fallback: http",
                    LlmError::Envelope(_) => "fallback: envelope",
                };
                let provenance = format!("{tag} ({call_err})");
                self.transcripts.push(LlmTranscript {
                    prompt,
                    response: None,
                    outcome: provenance.clone(),
                    attempts: self.config.max_retries + 1,
                    latency_ms,
                    prompt_tokens: None,
                    completion_tokens: None,
                });
                self.rule_fallback(window, fields, inspected, provenance)
            }
        }
    }

    fn rule_fallback(
        &self,
        window: &DetectionWindow,
        fields: &[DistanceField],
        inspected: &BTreeSet<usize>,
        provenance: String,
    ) -> AnalysisReport {
        let mut report = analyze_rule_based(window, fields, inspected);
        report.provenance = provenance;
        report
    }
}
