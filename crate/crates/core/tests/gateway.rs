mod common;

use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use assist_core::audit::{AuditLog, Clock};
use assist_core::harness::sampling_presets;
use assist_core::http::{HttpClient, HttpResponse, ServerHandle, TraceDirection};
use assist_core::orchestrator::{ChatModel, Gateway, HttpChatModel, ModelError, Orchestrator, OrchestratorConfig};
use assist_core::protocol::{ChatCompletionRequest, ChatCompletionResponse, Choice, WireMessage};
use assist_core::repo::RepoSnapshot;
use assist_core::scripted::{Scenario, ScriptedServer};

use common::*;

fn client() -> HttpClient {
    HttpClient::new(TraceDirection::ToModel)
}

fn body(r: &HttpResponse) -> Value {
    serde_json::from_slice(&r.body).unwrap()
}

fn post(url: &str, value: Value) -> HttpResponse {
    client().post_json(url, &serde_json::to_vec(&value).unwrap()).unwrap()
}

fn start(model: Arc<dyn ChatModel>, runs: &std::path::Path) -> ServerHandle {
    let audit = Arc::new(AuditLog::new(runs, Clock::replay()).unwrap());
    let repo = Arc::new(RepoSnapshot::local(fixture_repo_dir(), GIT_REF));
    let orchestrator = Orchestrator::new(model, repo, audit, OrchestratorConfig::default())
        .with_knowledge_base(fixture_knowledge_base(), "docs");
    Gateway::new(Arc::new(orchestrator), sampling_presets())
        .serve("127.0.0.1:0")
        .unwrap()
}

#[test]
fn health_presets_and_unknown_routes() {
    let runs = tempfile::tempdir().unwrap();
    let scripted = ScriptedServer::start(Scenario::bundled(), "127.0.0.1:0").unwrap();
    let gw = start(Arc::new(HttpChatModel::new(&scripted.url())), runs.path());

    let health = client().get(&format!("{}/healthz", gw.url())).unwrap();
    assert_eq!(health.status, 200);
    assert_eq!(body(&health), json!({"status": "ok"}));
    assert_eq!(health.header("access-control-allow-origin"), Some("*"));

    let presets = body(&client().get(&format!("{}/presets", gw.url())).unwrap());
    let presets = presets["presets"].as_array().unwrap();
    assert_eq!(presets.len(), 16);
    assert_eq!(presets[0]["label"], "Default");
    assert_eq!(presets[0]["min_p"], 0.0);

    assert_eq!(client().get(&format!("{}/nowhere", gw.url())).unwrap().status, 404);
    let wrong = client()
        .request("DELETE", &format!("{}/sessions", gw.url()), &[], None)
        .unwrap();
    assert_eq!(wrong.status, 405);

    let preflight = client()
        .request("OPTIONS", &format!("{}/sessions", gw.url()), &[], None)
        .unwrap();
    assert_eq!(preflight.status, 204);
    assert!(preflight
        .header("access-control-allow-methods")
        .unwrap()
        .contains("POST"));
}

#[test]
fn session_lifecycle_over_http() {
    let runs = tempfile::tempdir().unwrap();
    let scripted = ScriptedServer::start(Scenario::bundled(), "127.0.0.1:0").unwrap();
    let model = HttpChatModel::new(&format!("{}/scenarios/doc-only", scripted.url()));
    let gw = start(Arc::new(model), runs.path());
    let base = gw.url();

    let created = post(
        &format!("{base}/sessions"),
        json!({"model": "scripted", "preset": "min_p 0.1", "session_id": "s1"}),
    );
    assert_eq!(created.status, 201);
    assert_eq!(
        body(&created)["session"]["sampling"],
        json!({"temperature": 1.0, "top_p": 1.0, "min_p": 0.1})
    );

    let dup = post(
        &format!("{base}/sessions"),
        json!({"model": "scripted", "session_id": "s1"}),
    );
    assert_eq!(dup.status, 409);

    let turn = post(
        &format!("{base}/sessions/s1/messages"),
        json!({"text": scenario_prompts("doc-only")[0]}),
    );
    assert_eq!(turn.status, 200, "{}", turn.text_lossy());
    let turn = body(&turn)["turn"].clone();
    assert!(!turn["text"].as_str().unwrap().is_empty());
    let last = turn["last_event_id"].as_u64().unwrap();

    let all = body(&client().get(&format!("{base}/sessions/s1/events")).unwrap());
    let events = all["events"].as_array().unwrap();
    assert_eq!(events.last().unwrap()["event_id"].as_u64(), Some(last));
    assert_eq!(events[0]["kind"], "user_prompt");

    let later = body(
        &client()
            .get(&format!("{base}/sessions/s1/events?after={}", last - 1))
            .unwrap(),
    );
    assert_eq!(later["events"].as_array().unwrap().len(), 1);
    let none = body(
        &client()
            .get(&format!("{base}/sessions/s1/events?after={last}"))
            .unwrap(),
    );
    assert!(none["events"].as_array().unwrap().is_empty());
    assert_eq!(
        client()
            .get(&format!("{base}/sessions/s1/events?after=x"))
            .unwrap()
            .status,
        400
    );

    let shown = body(&client().get(&format!("{base}/sessions/s1")).unwrap());
    assert_eq!(shown["busy"], false);
    assert_eq!(shown["session"]["model_id"], "scripted");

    let closed = post(&format!("{base}/sessions/s1/close"), json!({}));
    assert_eq!(closed.status, 200);
    let run = body(&closed)["run"].clone();
    assert_eq!(run["event_count"].as_u64(), Some(events.len() as u64));
    assert!(std::path::Path::new(run["path"].as_str().unwrap()).exists());

    let after_close = post(&format!("{base}/sessions/s1/messages"), json!({"text": "more"}));
    assert_eq!(after_close.status, 409);
    assert_eq!(body(&after_close)["error"]["kind"], "session_closed");
}

#[test]
fn bad_requests_are_rejected() {
    let runs = tempfile::tempdir().unwrap();
    let scripted = ScriptedServer::start(Scenario::bundled(), "127.0.0.1:0").unwrap();
    let gw = start(Arc::new(HttpChatModel::new(&scripted.url())), runs.path());
    let base = gw.url();

    let cases = [
        (json!({"model": "m", "preset": "nope"}), "unknown_preset"),
        (
            json!({"model": "m", "sampling": {"temperature": -1.0, "top_p": 1.0, "min_p": 0.0}}),
            "bad_request",
        ),
        (
            json!({"model": "m", "preset": "Default", "sampling": {"temperature": 1.0, "top_p": 1.0, "min_p": 0.0}}),
            "bad_request",
        ),
        (json!({"model": "m", "colour": "blue"}), "bad_request"),
        (json!({}), "bad_request"),
    ];
    for (request, kind) in cases {
        let r = post(&format!("{base}/sessions"), request.clone());
        assert!(r.status == 400, "{request} gave {}", r.status);
        let k = body(&r)["error"]["kind"].as_str().unwrap().to_string();
        assert!(k == kind || k == "invalid_sampling", "{request} gave {k}");
    }
    let garbage = client().post_json(&format!("{base}/sessions"), b"{not json").unwrap();
    assert_eq!(garbage.status, 400);

    assert_eq!(client().get(&format!("{base}/sessions/ghost")).unwrap().status, 404);
    assert_eq!(
        post(&format!("{base}/sessions/ghost/messages"), json!({"text": "hi"})).status,
        404
    );
    assert_eq!(
        client().get(&format!("{base}/sessions/ghost/events")).unwrap().status,
        404
    );
}

/// Holds every completion until the test releases it.
struct GatedModel {
    entered: Mutex<Sender<()>>,
    release: Mutex<Receiver<()>>,
}

impl ChatModel for GatedModel {
    fn complete(&self, request: &ChatCompletionRequest) -> Result<ChatCompletionResponse, ModelError> {
        self.entered.lock().unwrap().send(()).unwrap();
        self.release
            .lock()
            .unwrap()
            .recv_timeout(Duration::from_secs(10))
            .unwrap();
        Ok(ChatCompletionResponse {
            id: "gated".into(),
            object: "chat.completion".into(),
            created: 0,
            model: request.model.clone(),
            choices: vec![Choice {
                index: 0,
                message: WireMessage {
                    role: "assistant".into(),
                    content: Some("done".into()),
                    tool_calls: None,
                    tool_call_id: None,
                },
                finish_reason: Some("stop".into()),
            }],
            usage: None,
            metadata: None,
        })
    }
}

#[test]
fn concurrent_message_gets_409() {
    let runs = tempfile::tempdir().unwrap();
    let (entered_tx, entered_rx) = channel();
    let (release_tx, release_rx) = channel();
    let model = GatedModel {
        entered: Mutex::new(entered_tx),
        release: Mutex::new(release_rx),
    };
    let gw = start(Arc::new(model), runs.path());
    let base = gw.url();
    assert_eq!(
        post(&format!("{base}/sessions"), json!({"model": "m", "session_id": "busy"})).status,
        201
    );

    let url = format!("{base}/sessions/busy/messages");
    let first = std::thread::spawn(move || post(&url, json!({"text": "first"})));
    entered_rx.recv_timeout(Duration::from_secs(10)).unwrap();

    let shown = body(&client().get(&format!("{base}/sessions/busy")).unwrap());
    assert_eq!(shown["busy"], true);
    let second = post(&format!("{base}/sessions/busy/messages"), json!({"text": "second"}));
    assert_eq!(second.status, 409);
    assert_eq!(body(&second)["error"]["kind"], "session_busy");

    release_tx.send(()).unwrap();
    let first = first.join().unwrap();
    assert_eq!(first.status, 200);
    assert_eq!(body(&first)["turn"]["text"], "done");

    let events = body(&client().get(&format!("{base}/sessions/busy/events")).unwrap());
    let prompts = events["events"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["kind"] == "user_prompt")
        .count();
    assert_eq!(prompts, 1);
}
