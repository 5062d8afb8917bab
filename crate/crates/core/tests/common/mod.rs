#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use base64::Engine;
use percent_encoding::percent_decode_str;
use serde_json::{json, Value};

use assist_core::audit::{import_run, AuditEvent, AuditLog, Clock, RunRecord, TraceStore};
use assist_core::docs::DocIndex;
use assist_core::harness::TaskFixture;
use assist_core::http::{self, ServerHandle};
use assist_core::orchestrator::{HttpChatModel, Orchestrator, OrchestratorConfig, SamplingConfig};
use assist_core::repo::RepoSnapshot;

pub const PROJECT: &str = "pp/battleship";
pub const GIT_REF: &str = "main";

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_repo_dir() -> PathBuf {
    crate_dir().join("fixtures/repo")
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(crate_dir().join("fixtures/golden").join(name)).expect("golden file exists")
}

/// Read-only GitLab v4 stand-in serving a directory. The tree listing is
/// paged at `page_size` entries regardless of the requested `per_page`.
pub struct MockGitLab {
    server: ServerHandle,
    pub tree_requests: Arc<AtomicUsize>,
}

fn tree_items(root: &Path) -> Vec<Value> {
    let mut items: Vec<(String, &'static str)> = walkdir::WalkDir::new(root)
        .min_depth(1)
        .into_iter()
        .filter_map(Result::ok)
        .map(|e| {
            let rel = e
                .path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/");
            (rel, if e.file_type().is_dir() { "tree" } else { "blob" })
        })
        .collect();
    items.sort();
    items
        .into_iter()
        .map(|(path, kind)| {
            let name = path.rsplit('/').next().unwrap().to_string();
            json!({"id": format!("{:040x}", path.len()), "name": name, "type": kind, "path": path, "mode": "100644"})
        })
        .collect()
}

fn query_param<'a>(query: &'a str, key: &str) -> Option<&'a str> {
    query
        .split('&')
        .find_map(|pair| pair.split_once('=').filter(|(k, _)| *k == key).map(|(_, v)| v))
}

fn respond(request: tiny_http::Request, status: u16, body: &Value, headers: &[(&str, String)]) {
    let mut response = tiny_http::Response::from_data(serde_json::to_vec(body).unwrap()).with_status_code(status);
    response.add_header(tiny_http::Header::from_bytes("content-type", "application/json").unwrap());
    for (name, value) in headers {
        response.add_header(tiny_http::Header::from_bytes(name.as_bytes(), value.as_bytes()).unwrap());
    }
    let _ = request.respond(response);
}

impl MockGitLab {
    pub fn start(root: PathBuf, page_size: usize) -> Self {
        let tree_requests = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&tree_requests);
        let project_prefix = format!("/api/v4/projects/{}/repository/", PROJECT.replace('/', "%2F"));
        let server = http::serve(
            "127.0.0.1:0",
            Arc::new(move |request: tiny_http::Request| {
                let url = request.url().to_string();
                let (path, query) = url.split_once('?').unwrap_or((&url, ""));
                if request.method() != &tiny_http::Method::Get {
                    return respond(request, 405, &json!({"message": "405 Method Not Allowed"}), &[]);
                }
                let Some(rest) = path.strip_prefix(&project_prefix) else {
                    return respond(request, 404, &json!({"message": "404 Project Not Found"}), &[]);
                };
                if query_param(query, "ref") != Some(GIT_REF) {
                    return respond(request, 404, &json!({"message": "404 Ref Not Found"}), &[]);
                }
                if rest == "tree" {
                    counter.fetch_add(1, Ordering::SeqCst);
                    let items = tree_items(&root);
                    let page: usize = query_param(query, "page").and_then(|p| p.parse().ok()).unwrap_or(1);
                    let pages = items.len().div_ceil(page_size).max(1);
                    let slice: Vec<Value> = items
                        .iter()
                        .skip((page - 1) * page_size)
                        .take(page_size)
                        .cloned()
                        .collect();
                    let next = if page < pages {
                        (page + 1).to_string()
                    } else {
                        String::new()
                    };
                    return respond(
                        request,
                        200,
                        &Value::Array(slice),
                        &[
                            ("x-page", page.to_string()),
                            ("x-per-page", page_size.to_string()),
                            ("x-next-page", next),
                            ("x-total", items.len().to_string()),
                            ("x-total-pages", pages.to_string()),
                        ],
                    );
                }
                if let Some(encoded) = rest.strip_prefix("files/") {
                    let file_path = percent_decode_str(encoded).decode_utf8_lossy().into_owned();
                    let full = root.join(&file_path);
                    if file_path.split('/').any(|s| s == "..") || !full.is_file() {
                        return respond(request, 404, &json!({"message": "404 File Not Found"}), &[]);
                    }
                    let bytes = std::fs::read(&full).unwrap();
                    let body = json!({
                        "file_name": full.file_name().unwrap().to_string_lossy(),
                        "file_path": file_path,
                        "size": bytes.len(),
                        "encoding": "base64",
                        "content": base64::engine::general_purpose::STANDARD.encode(&bytes),
                        "ref": GIT_REF,
                    });
                    return respond(request, 200, &body, &[]);
                }
                respond(request, 404, &json!({"message": "404 Not Found"}), &[])
            }),
        )
        .expect("mock provider starts");
        Self { server, tree_requests }
    }

    pub fn api_url(&self) -> String {
        format!("{}/api/v4", self.server.url())
    }

    pub fn url(&self) -> String {
        self.server.url()
    }
}

/// Prompts issued to each bundled scenario, in order.
pub fn scenario_prompts(scenario_id: &str) -> Vec<String> {
    match scenario_id {
        "menu-toggle" => TaskFixture::task2().prompts,
        "doc-only" => {
            let mut prompts = TaskFixture::task1().prompts;
            prompts.push(TaskFixture::task2().prompts[0].clone());
            prompts
        }
        "method-check" => {
            vec!["Before changing anything, check whether Menu.java already has a toggleSound method.".into()]
        }
        other => panic!("no prompts for scenario {other}"),
    }
}

pub fn fixture_knowledge_base() -> Arc<DocIndex> {
    let mut index = DocIndex::fallback();
    index.ingest_dir(&fixture_repo_dir().join("docs")).unwrap();
    Arc::new(index)
}

pub struct ScenarioRun {
    pub record: RunRecord,
    pub events: Vec<AuditEvent>,
}

/// One scripted scenario end to end: fresh session named after the scenario,
/// all prompts, close, export, then the ledger read back from disk.
pub fn run_scenario(
    scenario_id: &str,
    runs_dir: &Path,
    repo: Arc<RepoSnapshot>,
    scripted_url: &str,
    sampling: SamplingConfig,
) -> ScenarioRun {
    let audit = Arc::new(AuditLog::new(runs_dir, Clock::replay()).unwrap());
    let model = HttpChatModel::new(&format!("{scripted_url}/scenarios/{scenario_id}"))
        .with_sink(Arc::new(TraceStore::new(runs_dir)));
    let orchestrator = Orchestrator::new(Arc::new(model), repo, audit, OrchestratorConfig::default())
        .with_knowledge_base(fixture_knowledge_base(), "docs");
    orchestrator
        .create_session(Some(scenario_id), "scripted", sampling)
        .unwrap();
    for prompt in scenario_prompts(scenario_id) {
        orchestrator.send_user_message(scenario_id, &prompt).unwrap();
    }
    orchestrator.close_session(scenario_id).unwrap();
    let record = orchestrator.export_run(scenario_id).unwrap();
    let events = import_run(&record.path).unwrap();
    ScenarioRun { record, events }
}
