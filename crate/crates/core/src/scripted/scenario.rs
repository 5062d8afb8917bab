use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::orchestrator::strip_context;
use crate::protocol::{
    ChatCompletionRequest, ChatCompletionResponse, Choice, WireFunctionCall, WireMessage, WireToolCall,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario {origin}: {reason}")]
    Parse { origin: String, reason: String },
    #[error("scenario `{scenario_id}` is invalid: {reason}")]
    Invalid { scenario_id: String, reason: String },
    #[error("scenario id `{0}` is used twice")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EmbeddingMode {
    #[default]
    #[serde(rename = "fallback-hash")]
    FallbackHash,
}

/// Condition a request must meet for a turn to fire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Matcher {
    /// The request ends with a user message containing this text.
    UserContains(String),
    /// The request ends with tool results, one of them for this tool.
    ToolResultFor(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    #[serde(default = "empty_object")]
    pub arguments: Value,
}

fn empty_object() -> Value {
    json!({})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptedReply {
    ToolCalls(Vec<ScriptedCall>),
    Content(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedTurn {
    pub when: Matcher,
    pub reply: ScriptedReply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario_id: String,
    #[serde(default)]
    pub embedding_mode: EmbeddingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub turns: Vec<ScriptedTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no scripted turn of `{scenario_id}` matches the request")]
pub struct NoMatch {
    pub scenario_id: String,
}

const BUNDLED: &[(&str, &str)] = &[
    ("doc-only.json", include_str!("../../scenarios/doc-only.json")),
    ("menu-toggle.json", include_str!("../../scenarios/menu-toggle.json")),
    ("method-check.json", include_str!("../../scenarios/method-check.json")),
];

impl Scenario {
    pub fn from_json(origin: &str, text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            origin: origin.to_string(),
            reason: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&path.display().to_string(), &text)
    }

    /// Every `*.json` file in `dir`, ordered by scenario id.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, ScenarioError> {
        let io = |source| ScenarioError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut scenarios = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                scenarios.push(Self::load(&path)?);
            }
        }
        check_unique(&mut scenarios)?;
        Ok(scenarios)
    }

    /// The scenarios shipped with the crate.
    pub fn bundled() -> Vec<Self> {
        let mut scenarios: Vec<Self> = BUNDLED
            .iter()
            .map(|(name, text)| Self::from_json(name, text).expect("bundled scenario is valid"))
            .collect();
        check_unique(&mut scenarios).expect("bundled scenario ids are unique");
        scenarios
    }

    pub fn bundled_by_id(id: &str) -> Option<Self> {
        Self::bundled().into_iter().find(|s| s.scenario_id == id)
    }

    /// Checks that each turn can fire given the turns before it.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |reason: String| ScenarioError::Invalid {
            scenario_id: self.scenario_id.clone(),
            reason,
        };
        if self.scenario_id.is_empty() || self.scenario_id.contains(['/', '?', '#']) {
            return Err(invalid("scenario_id must be non-empty and URL-safe".into()));
        }
        if self.turns.is_empty() {
            return Err(invalid("no turns".into()));
        }
        let mut issued: Vec<&str> = Vec::new();
        for (i, turn) in self.turns.iter().enumerate() {
            match &turn.when {
                Matcher::UserContains(text) if text.trim().is_empty() => {
                    return Err(invalid(format!("turn {}: empty user_contains", i + 1)));
                }
                Matcher::ToolResultFor(tool) if !issued.contains(&tool.as_str()) => {
                    return Err(invalid(format!(
                        "turn {} waits for a `{tool}` result, but no earlier turn calls it",
                        i + 1
                    )));
                }
                _ => {}
            }
            if let ScriptedReply::ToolCalls(calls) = &turn.reply {
                if calls.is_empty() {
                    return Err(invalid(format!("turn {}: empty tool_calls", i + 1)));
                }
                for call in calls {
                    if !call.arguments.is_object() {
                        return Err(invalid(format!(
                            "turn {}: arguments of `{}` must be an object",
                            i + 1,
                            call.name
                        )));
                    }
                    issued.push(&call.name);
                }
            }
        }
        Ok(())
    }

    fn fires(&self, turn: &ScriptedTurn, messages: &[WireMessage], offered: &[&str]) -> bool {
        if let ScriptedReply::ToolCalls(calls) = &turn.reply {
            if !calls.iter().all(|c| offered.contains(&c.name.as_str())) {
                return false;
            }
        }
        let Some(last) = messages.last() else {
            return false;
        };
        match &turn.when {
            Matcher::UserContains(text) => {
                last.role == "user" && strip_context(last.content.as_deref().unwrap_or("")).contains(text.as_str())
            }
            Matcher::ToolResultFor(tool) => {
                let results_start = messages.iter().rposition(|m| m.role != "tool").map_or(0, |i| i + 1);
                if results_start == messages.len() || results_start == 0 {
                    return false;
                }
                let issuer = &messages[results_start - 1];
                let names: HashMap<&str, &str> = issuer
                    .tool_calls
                    .iter()
                    .flatten()
                    .map(|c| (c.id.as_str(), c.function.name.as_str()))
                    .collect();
                messages[results_start..].iter().any(|m| {
                    m.tool_call_id
                        .as_deref()
                        .and_then(|id| names.get(id))
                        .is_some_and(|name| name == tool)
                })
            }
        }
    }

    fn first_firing(&self, messages: &[WireMessage], offered: &[&str], consumed: &[bool]) -> Option<usize> {
        self.turns
            .iter()
            .enumerate()
            .find(|(i, t)| !consumed[*i] && self.fires(t, messages, offered))
            .map(|(i, _)| i)
    }

    /// Index of the turn answering `request`. Turns consumed by earlier
    /// requests of the same conversation are found by replaying the history,
    /// so matching needs no server-side state.
    pub fn match_turn(&self, request: &ChatCompletionRequest) -> Result<usize, NoMatch> {
        let offered: Vec<&str> = request.tools.iter().map(|t| t.function.name.as_str()).collect();
        let mut consumed = vec![false; self.turns.len()];
        for (i, m) in request.messages.iter().enumerate() {
            if m.role == "assistant" {
                if let Some(t) = self.first_firing(&request.messages[..i], &offered, &consumed) {
                    consumed[t] = true;
                }
            }
        }
        self.first_firing(&request.messages, &offered, &consumed)
            .ok_or_else(|| NoMatch {
                scenario_id: self.scenario_id.clone(),
            })
    }

    /// The scripted reply of turn `index`, echoing the request's sampling fields.
    pub fn respond(&self, index: usize, request: &ChatCompletionRequest) -> ChatCompletionResponse {
        let turn_no = index + 1;
        let (message, finish_reason) = match &self.turns[index].reply {
            ScriptedReply::Content(text) => (
                WireMessage {
                    role: "assistant".into(),
                    content: Some(text.clone()),
                    tool_calls: None,
                    tool_call_id: None,
                },
                "stop",
            ),
            ScriptedReply::ToolCalls(calls) => {
                let calls = calls
                    .iter()
                    .enumerate()
                    .map(|(i, c)| WireToolCall {
                        id: c.id.clone().unwrap_or_else(|| format!("call_{turn_no}_{}", i + 1)),
                        kind: "function".into(),
                        function: WireFunctionCall {
                            name: c.name.clone(),
                            arguments: c.arguments.to_string(),
                        },
                    })
                    .collect();
                (
                    WireMessage {
                        role: "assistant".into(),
                        content: None,
                        tool_calls: Some(calls),
                        tool_call_id: None,
                    },
                    "tool_calls",
                )
            }
        };
        ChatCompletionResponse {
            id: format!("scripted-{}-{turn_no}", self.scenario_id),
            object: "chat.completion".into(),
            created: 0,
            model: request.model.clone(),
            choices: vec![Choice {
                index: 0,
                message,
                finish_reason: Some(finish_reason.into()),
            }],
            usage: None,
            metadata: Some(json!({
                "scenario_id": self.scenario_id,
                "turn": turn_no,
                "sampling": {
                    "temperature": request.temperature,
                    "top_p": request.top_p,
                    "min_p": request.min_p,
                },
            })),
        }
    }
}

fn check_unique(scenarios: &mut [Scenario]) -> Result<(), ScenarioError> {
    scenarios.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    for pair in scenarios.windows(2) {
        if pair[0].scenario_id == pair[1].scenario_id {
            return Err(ScenarioError::Duplicate(pair[0].scenario_id.clone()));
        }
    }
    Ok(())
}
