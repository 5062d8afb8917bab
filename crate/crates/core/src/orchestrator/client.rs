use std::sync::Arc;

use serde_json::Value;

use crate::audit::{current_link, LINK_EVENT_HEADER, LINK_RUN_HEADER};
use crate::http::{HttpClient, TraceDirection, TraceSink};
use crate::protocol::{ChatCompletionRequest, ChatCompletionResponse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("model endpoint returned HTTP {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("model endpoint unreachable: {0}")]
    Transport(String),
    #[error("unexpected model response: {0}")]
    Protocol(String),
}

impl ModelError {
    /// True when the endpoint refused the request because of `field`.
    pub fn rejects_field(&self, field: &str) -> bool {
        match self {
            ModelError::Rejected { status, message } => matches!(status, 400 | 422) && message.contains(field),
            _ => false,
        }
    }
}

/// Anything that answers chat-completions requests.
pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatCompletionRequest) -> Result<ChatCompletionResponse, ModelError>;
}

/// Client for an OpenAI-compatible `POST {base}/v1/chat/completions`.
#[derive(Debug, Clone)]
pub struct HttpChatModel {
    endpoint: String,
    http: HttpClient,
}

impl HttpChatModel {
    pub fn new(base_url: &str) -> Self {
        Self::with_client(base_url, HttpClient::new(TraceDirection::ToModel))
    }

    pub fn with_client(base_url: &str, http: HttpClient) -> Self {
        Self {
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            http,
        }
    }

    pub fn with_sink(mut self, sink: Arc<dyn TraceSink>) -> Self {
        self.http = self.http.with_sink(sink);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn error_message(body: &[u8]) -> String {
    let text = String::from_utf8_lossy(body).into_owned();
    let Ok(json) = serde_json::from_slice::<Value>(body) else {
        return text;
    };
    let pointer = ["/error/message", "/message", "/detail", "/error"]
        .iter()
        .find_map(|p| json.pointer(p).and_then(Value::as_str));
    pointer.map(str::to_string).unwrap_or(text)
}

impl ChatModel for HttpChatModel {
    fn complete(&self, request: &ChatCompletionRequest) -> Result<ChatCompletionResponse, ModelError> {
        let body = serde_json::to_vec(request).map_err(|e| ModelError::Protocol(e.to_string()))?;
        let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
        if let Some(link) = current_link() {
            headers.push((LINK_RUN_HEADER.to_string(), link.session_id));
            headers.push((LINK_EVENT_HEADER.to_string(), link.event_id.to_string()));
        }
        let resp = self
            .http
            .request("POST", &self.endpoint, &headers, Some(&body))
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        if !resp.is_success() {
            return Err(ModelError::Rejected {
                status: resp.status,
                message: error_message(&resp.body),
            });
        }
        let parsed: ChatCompletionResponse =
            serde_json::from_slice(&resp.body).map_err(|e| ModelError::Protocol(e.to_string()))?;
        if parsed.choices.is_empty() {
            return Err(ModelError::Protocol("response has no choices".into()));
        }
        Ok(parsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejection_detection_reads_the_error_message() {
        let err = ModelError::Rejected {
            status: 400,
            message: error_message(br#"{"error":{"message":"Unrecognized request argument: min_p"}}"#),
        };
        assert!(err.rejects_field("min_p"));
        let err = ModelError::Rejected {
            status: 500,
            message: "min_p".into(),
        };
        assert!(!err.rejects_field("min_p"));
        assert_eq!(error_message(b"plain"), "plain");
    }
}
