//! Forwarding HTTP proxy that records every exchange.

use std::sync::{Arc, Mutex};

use super::TraceStore;
use crate::http::{self, HttpClient, HttpExchange, ServeError, ServerHandle, TraceDirection};

/// Header naming the run a proxied request belongs to.
pub const LINK_RUN_HEADER: &str = "x-assist-run";
/// Header naming the ledger event a proxied request belongs to.
pub const LINK_EVENT_HEADER: &str = "x-assist-event";

const HOP_BY_HOP: &[&str] = &[
    "host",
    "connection",
    "keep-alive",
    "proxy-connection",
    "transfer-encoding",
    "content-length",
    "upgrade",
    "te",
    "trailer",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedRequest {
    pub method: String,
    /// Path and query as received.
    pub target: String,
    /// 502 when the upstream could not be reached.
    pub status: u16,
}

pub struct CaptureProxy {
    server: ServerHandle,
    observed: Arc<Mutex<Vec<ObservedRequest>>>,
}

impl std::fmt::Debug for CaptureProxy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaptureProxy")
            .field("addr", &self.server.addr())
            .finish()
    }
}

impl CaptureProxy {
    /// Listens on `listen` and forwards every request verbatim to `upstream`
    /// (a base URL such as `http://127.0.0.1:9000`). Exchanges are stored in
    /// `store` when one is given.
    pub fn start(
        listen: &str,
        upstream: &str,
        direction: TraceDirection,
        store: Option<Arc<TraceStore>>,
    ) -> Result<Self, ServeError> {
        let upstream = upstream.trim_end_matches('/').to_string();
        let observed: Arc<Mutex<Vec<ObservedRequest>>> = Arc::default();
        let seen = Arc::clone(&observed);
        let client = HttpClient::new(direction);
        let handler = move |mut request: tiny_http::Request| {
            let method = request.method().to_string();
            let target = request.url().to_string();
            let headers: Vec<(String, String)> = request
                .headers()
                .iter()
                .map(|h| (h.field.as_str().to_string(), h.value.as_str().to_string()))
                .collect();
            let header = |name: &str| {
                headers
                    .iter()
                    .find(|(n, _)| n.eq_ignore_ascii_case(name))
                    .map(|(_, v)| v.clone())
            };
            let run_id = header(LINK_RUN_HEADER).unwrap_or_else(|| "proxy".to_string());
            let event_id = header(LINK_EVENT_HEADER).and_then(|v| v.parse::<u64>().ok());
            let body = http::read_body(&mut request).unwrap_or_default();
            let forward_headers: Vec<(String, String)> = headers
                .iter()
                .filter(|(n, _)| !HOP_BY_HOP.iter().any(|h| n.eq_ignore_ascii_case(h)))
                .cloned()
                .collect();
            let url = format!("{upstream}{target}");
            let has_body = !body.is_empty() || !matches!(method.as_str(), "GET" | "HEAD" | "DELETE");
            let result = client.request(&method, &url, &forward_headers, has_body.then_some(body.as_slice()));

            let (status, response_headers, response_body) = match result {
                Ok(resp) => (resp.status, resp.headers, resp.body),
                Err(e) => (502, Vec::new(), e.to_string().into_bytes()),
            };
            seen.lock().expect("observed list poisoned").push(ObservedRequest {
                method: method.clone(),
                target: target.clone(),
                status,
            });
            if let Some(store) = &store {
                let exchange = HttpExchange {
                    method,
                    url,
                    request_headers: forward_headers,
                    request_body: body,
                    status,
                    response_headers: response_headers.clone(),
                    response_body: response_body.clone(),
                };
                if let Err(e) = store.capture_trace(&run_id, direction, &exchange, event_id) {
                    tracing::warn!(error = %e, "proxy failed to store trace");
                }
            }

            let mut response = tiny_http::Response::from_data(response_body).with_status_code(status);
            for (name, value) in &response_headers {
                if HOP_BY_HOP.iter().any(|h| name.eq_ignore_ascii_case(h)) {
                    continue;
                }
                if let Ok(h) = tiny_http::Header::from_bytes(name.as_bytes(), value.as_bytes()) {
                    response = response.with_header(h);
                }
            }
            let _ = request.respond(response);
        };
        let server = http::serve(listen, Arc::new(handler))?;
        Ok(Self { server, observed })
    }

    pub fn url(&self) -> String {
        self.server.url()
    }

    pub fn observed(&self) -> Vec<ObservedRequest> {
        self.observed.lock().expect("observed list poisoned").clone()
    }

    /// Requests whose method was anything other than GET.
    pub fn non_get(&self) -> Vec<ObservedRequest> {
        self.observed().into_iter().filter(|r| r.method != "GET").collect()
    }

    pub fn shutdown(self) {
        self.server.shutdown();
    }

    /// Blocks until the proxy stops.
    pub fn join(self) {
        self.server.join();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forwards_and_records() {
        let upstream = http::serve(
            "127.0.0.1:0",
            Arc::new(|mut r: tiny_http::Request| {
                let body = http::read_body(&mut r).unwrap();
                let reply = serde_json::json!({"method": r.method().to_string(), "path": r.url(), "len": body.len()});
                http::respond_json(r, 201, &reply);
            }),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(TraceStore::new(dir.path()));
        let proxy = CaptureProxy::start(
            "127.0.0.1:0",
            &upstream.url(),
            TraceDirection::ToModel,
            Some(Arc::clone(&store)),
        )
        .unwrap();

        let client = HttpClient::new(TraceDirection::ToModel)
            .with_header(LINK_RUN_HEADER, "r1")
            .with_header(LINK_EVENT_HEADER, "4");
        let resp = client
            .post_json(&format!("{}/v1/x?y=1", proxy.url()), b"{\"a\":1}")
            .unwrap();
        assert_eq!(resp.status, 201);
        let echoed: serde_json::Value = serde_json::from_slice(&resp.body).unwrap();
        assert_eq!(echoed["path"], "/v1/x?y=1");
        assert_eq!(echoed["len"], 7);

        let observed = proxy.observed();
        assert_eq!(observed.len(), 1);
        assert_eq!(observed[0].method, "POST");
        assert_eq!(proxy.non_get().len(), 1);
        let traces = store.traces("r1");
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].event_id, Some(4));
        let raw = std::fs::read(store.traces_dir("r1").join("t0001.request")).unwrap();
        assert!(raw.ends_with(b"{\"a\":1}"));
    }
}
