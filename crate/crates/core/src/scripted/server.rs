use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use super::scenario::{Scenario, ScenarioError};
use crate::docs::HashEmbedder;
use crate::http::{self, ServeError, ServerHandle};
use crate::protocol::{ChatCompletionRequest, EmbeddingDatum, EmbeddingsResponse};

#[derive(Debug, thiserror::Error)]
pub enum ScriptedError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("port {0} is already in use")]
    PortInUse(String),
    #[error(transparent)]
    Serve(ServeError),
}

impl From<ServeError> for ScriptedError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::PortInUse(addr) => ScriptedError::PortInUse(addr),
            other => ScriptedError::Serve(other),
        }
    }
}

/// Routes requests to scenarios. Pure: the same request always gets the same reply.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    scenarios: BTreeMap<String, Scenario>,
}

fn error_body(kind: &str, message: &str) -> Value {
    json!({"error": {"type": kind, "message": message}})
}

impl ScriptedModel {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self, ScenarioError> {
        let mut map = BTreeMap::new();
        for s in scenarios {
            s.validate()?;
            let id = s.scenario_id.clone();
            if map.insert(id.clone(), s).is_some() {
                return Err(ScenarioError::Duplicate(id));
            }
        }
        Ok(Self { scenarios: map })
    }

    pub fn scenario_ids(&self) -> Vec<String> {
        self.scenarios.keys().cloned().collect()
    }

    /// Picks the scenario named in the path, else the one named by `model`,
    /// else the only one loaded.
    fn select(&self, from_path: Option<&str>, model: &str) -> Result<&Scenario, (u16, Value)> {
        if let Some(id) = from_path {
            return self
                .scenarios
                .get(id)
                .ok_or_else(|| (404, error_body("unknown_scenario", &format!("no scenario `{id}`"))));
        }
        if let Some(s) = self.scenarios.get(model) {
            return Ok(s);
        }
        if self.scenarios.len() == 1 {
            return Ok(self.scenarios.values().next().expect("one scenario"));
        }
        Err((
            422,
            error_body(
                "no_scenario",
                "several scenarios are loaded; use /scenarios/{id}/v1/chat/completions or set model to a scenario id",
            ),
        ))
    }

    /// Answers one chat-completions body with (status, JSON body).
    pub fn chat(&self, scenario: Option<&str>, body: &[u8]) -> (u16, Value) {
        let request: ChatCompletionRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return (400, error_body("invalid_request", &e.to_string())),
        };
        let scenario = match self.select(scenario, &request.model) {
            Ok(s) => s,
            Err(reply) => return reply,
        };
        match scenario.match_turn(&request) {
            Ok(turn) => {
                let response = scenario.respond(turn, &request);
                (200, serde_json::to_value(response).expect("response serializes"))
            }
            Err(no_match) => {
                let echoed: Value = serde_json::from_slice(body).unwrap_or(Value::Null);
                let mut body = error_body("no_match", &no_match.to_string());
                body["error"]["scenario_id"] = json!(no_match.scenario_id);
                body["error"]["request"] = echoed;
                (422, body)
            }
        }
    }

    pub fn embeddings(&self, body: &[u8]) -> (u16, Value) {
        let request: Value = match serde_json::from_slice(body) {
            Ok(v) => v,
            Err(e) => return (400, error_body("invalid_request", &e.to_string())),
        };
        let inputs: Vec<String> = match &request["input"] {
            Value::String(s) => vec![s.clone()],
            Value::Array(items) if items.iter().all(Value::is_string) => {
                items.iter().filter_map(|v| v.as_str().map(str::to_string)).collect()
            }
            _ => {
                return (
                    400,
                    error_body("invalid_request", "input must be a string or a list of strings"),
                )
            }
        };
        let mut data = Vec::with_capacity(inputs.len());
        for (index, text) in inputs.iter().enumerate() {
            match HashEmbedder.embed_one(text) {
                Ok(v) => data.push(EmbeddingDatum {
                    object: "embedding".into(),
                    index,
                    embedding: v.values().to_vec(),
                }),
                Err(e) => return (400, error_body("invalid_request", &format!("input {index}: {e}"))),
            }
        }
        let response = EmbeddingsResponse {
            object: "list".into(),
            data,
            model: request["model"].as_str().unwrap_or("fallback-hash").to_string(),
        };
        (200, serde_json::to_value(response).expect("response serializes"))
    }

    fn route(&self, method: &str, url: &str, body: &[u8]) -> (u16, Value) {
        let path = url.split('?').next().unwrap_or(url);
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, segments.as_slice()) {
            ("GET", ["healthz"]) => (200, json!({"status": "ok"})),
            ("GET", ["scenarios"]) => (200, json!({"scenarios": self.scenario_ids()})),
            ("POST", ["v1", "chat", "completions"]) => self.chat(None, body),
            ("POST", ["scenarios", id, "v1", "chat", "completions"]) => self.chat(Some(id), body),
            ("POST", ["v1", "embeddings"] | ["scenarios", _, "v1", "embeddings"]) => self.embeddings(body),
            _ => (404, error_body("not_found", &format!("no route for {method} {path}"))),
        }
    }
}

/// A running scripted endpoint.
#[derive(Debug)]
pub struct ScriptedServer {
    handle: ServerHandle,
    model: Arc<ScriptedModel>,
}

impl ScriptedServer {
    pub fn start(scenarios: Vec<Scenario>, addr: &str) -> Result<Self, ScriptedError> {
        let model = Arc::new(ScriptedModel::new(scenarios)?);
        let routed = Arc::clone(&model);
        let handle = http::serve(
            addr,
            Arc::new(move |mut request: tiny_http::Request| {
                let method = request.method().to_string().to_ascii_uppercase();
                let url = request.url().to_string();
                let (status, body) = match http::read_body(&mut request) {
                    Ok(body) => routed.route(&method, &url, &body),
                    Err(e) => (400, error_body("invalid_request", &e.to_string())),
                };
                http::respond_json(request, status, &body);
            }),
        )?;
        Ok(Self { handle, model })
    }

    pub fn url(&self) -> String {
        self.handle.url()
    }

    /// Base URL that pins requests to one scenario.
    pub fn scenario_url(&self, scenario_id: &str) -> String {
        format!("{}/scenarios/{scenario_id}", self.handle.url())
    }

    pub fn model(&self) -> &ScriptedModel {
        &self.model
    }

    pub fn shutdown(self) {
        self.handle.shutdown();
    }

    pub fn join(self) {
        self.handle.join();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpClient, TraceDirection};

    #[test]
    fn unmatched_request_gets_422_with_echo() {
        let model = ScriptedModel::new(Scenario::bundled()).unwrap();
        let body = br#"{"model":"m","messages":[{"role":"user","content":"hello"}]}"#;
        let (status, reply) = model.chat(Some("doc-only"), body);
        assert_eq!(status, 422);
        assert_eq!(reply["error"]["request"]["messages"][0]["content"], "hello");
        let (status, _) = model.chat(None, body);
        assert_eq!(status, 422);
        let (status, _) = model.chat(Some("nope"), body);
        assert_eq!(status, 404);
    }

    #[test]
    fn same_request_same_bytes_over_http() {
        let server = ScriptedServer::start(Scenario::bundled(), "127.0.0.1:0").unwrap();
        let client = HttpClient::new(TraceDirection::ToModel);
        let body =
            br#"{"model":"m","messages":[{"role":"user","content":"Ships are rendered as boxes"}],"temperature":0.5}"#;
        let url = format!("{}/v1/chat/completions", server.scenario_url("doc-only"));
        let a = client.post_json(&url, body).unwrap();
        let b = client.post_json(&url, body).unwrap();
        assert_eq!(a.status, 200);
        assert_eq!(a.body, b.body);

        let emb = client
            .post_json(
                &format!("{}/v1/embeddings", server.url()),
                br#"{"model":"x","input":["ship ship model"]}"#,
            )
            .unwrap();
        let parsed: EmbeddingsResponse = serde_json::from_slice(&emb.body).unwrap();
        assert_eq!(parsed.data[0].embedding.len(), 256);
    }

    #[test]
    fn occupied_port_is_reported() {
        let first = ScriptedServer::start(Scenario::bundled(), "127.0.0.1:0").unwrap();
        let addr = first.handle.addr().to_string();
        let second = ScriptedServer::start(Scenario::bundled(), &addr);
        assert!(matches!(second, Err(ScriptedError::PortInUse(_))));
    }
}
