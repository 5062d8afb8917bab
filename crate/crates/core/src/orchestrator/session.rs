use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

/// A tool invocation requested by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    pub tool_name: String,
    /// Argument object as JSON text, exactly as the model sent it.
    pub arguments: String,
}

impl ToolCall {
    pub fn new(call_id: impl Into<String>, tool_name: impl Into<String>, arguments: &Value) -> Self {
        Self {
            call_id: call_id.into(),
            tool_name: tool_name.into(),
            arguments: arguments.to_string(),
        }
    }

    pub fn parsed_arguments(&self) -> Result<Map<String, Value>, String> {
        let text = if self.arguments.trim().is_empty() {
            "{}"
        } else {
            &self.arguments
        };
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(map)) => Ok(map),
            Ok(other) => Err(format!("arguments must be a JSON object, got {}", json_type(&other))),
            Err(e) => Err(format!("arguments are not valid JSON: {e}")),
        }
    }

    /// Parsed arguments for the ledger, or the raw text if they do not parse.
    pub fn arguments_value(&self) -> Value {
        serde_json::from_str(&self.arguments).unwrap_or_else(|_| Value::String(self.arguments.clone()))
    }
}

pub(crate) fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            tool_calls,
            tool_call_id: None,
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }

    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid sampling: {0}")]
pub struct InvalidSampling(pub String);

/// Decoding parameters sent with every chat-completions request of a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub min_p: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl SamplingConfig {
    pub const DEFAULT: SamplingConfig = SamplingConfig {
        temperature: 1.0,
        top_p: 1.0,
        min_p: 0.0,
    };

    /// Fixed parameters of the model sweep.
    pub const MODEL_SWEEP: SamplingConfig = SamplingConfig {
        temperature: 0.5,
        top_p: 0.95,
        min_p: 0.0,
    };

    pub fn new(temperature: f64, top_p: f64, min_p: f64) -> Result<Self, InvalidSampling> {
        let config = Self {
            temperature,
            top_p,
            min_p,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), InvalidSampling> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(InvalidSampling(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(InvalidSampling(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if !(self.min_p >= 0.0 && self.min_p < 1.0) {
            return Err(InvalidSampling(format!("min_p must be in [0, 1), got {}", self.min_p)));
        }
        Ok(())
    }
}

/// A named sampling configuration offered to users and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPreset {
    pub label: String,
    pub group: String,
    #[serde(flatten)]
    pub sampling: SamplingConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseLanguage {
    #[default]
    English,
    German,
}

impl ResponseLanguage {
    fn name(self) -> &'static str {
        match self {
            ResponseLanguage::English => "English",
            ResponseLanguage::German => "German",
        }
    }
}

impl std::str::FromStr for ResponseLanguage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(ResponseLanguage::English),
            "de" | "german" => Ok(ResponseLanguage::German),
            other => Err(format!(
                "unknown response language `{other}` (expected english or german)"
            )),
        }
    }
}

pub fn system_prompt(language: ResponseLanguage) -> String {
    format!(
        "You are a repository-aware assistant for the Battleship programming project. \
Ground your answers in the project documentation supplied as context and in repository content you read with the tools. \
Initialize the session once by calling load_battleship_json to load the repository's class inventory; later calls are disabled. \
Use file_path_finder to locate a class, get_content_from_file to read it, and get_methods to confirm that a method exists before fetching it. \
Do not refer to classes or methods the repository does not contain. Answer in {}.",
        language.name()
    )
}

/// Conversation state of one chat instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub model_id: String,
    pub sampling: SamplingConfig,
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<String>,
    pub inventory_loaded: bool,
    pub knowledge_base: Option<String>,
    /// Request fields dropped after the endpoint rejected them.
    pub stripped_fields: Vec<String>,
    pub closed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_bounds() {
        assert!(SamplingConfig::new(1.0, 1.0, 0.0).is_ok());
        assert!(SamplingConfig::new(0.0, 1.0, 0.0).is_ok());
        assert!(SamplingConfig::new(1.0, 0.0, 0.0).is_err());
        assert!(SamplingConfig::new(1.0, 1.1, 0.0).is_err());
        assert!(SamplingConfig::new(1.0, 1.0, 1.0).is_err());
        assert!(SamplingConfig::new(-0.1, 1.0, 0.0).is_err());
        assert!(SamplingConfig::new(f64::NAN, 1.0, 0.0).is_err());
        assert_eq!(SamplingConfig::default(), SamplingConfig::new(1.0, 1.0, 0.0).unwrap());
    }

    #[test]
    fn bad_arguments_are_reported_not_parsed() {
        let call = ToolCall {
            call_id: "c".into(),
            tool_name: "t".into(),
            arguments: "[1]".into(),
        };
        assert!(call.parsed_arguments().unwrap_err().contains("array"));
        let call = ToolCall {
            arguments: "{oops".into(),
            ..call
        };
        assert_eq!(call.arguments_value(), Value::String("{oops".into()));
        let call = ToolCall {
            arguments: String::new(),
            ..call
        };
        assert!(call.parsed_arguments().unwrap().is_empty());
    }

    #[test]
    fn language_is_configurable() {
        assert!(system_prompt(ResponseLanguage::German).ends_with("Answer in German."));
        assert_eq!("de".parse::<ResponseLanguage>().unwrap(), ResponseLanguage::German);
    }
}
