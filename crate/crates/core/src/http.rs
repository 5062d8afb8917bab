//! Blocking HTTP plumbing shared by the provider client, the model client,
//! the scripted model server, the gateway and the capturing proxy.

use std::fmt;
use std::io::Read;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

/// Which upstream an exchange went to. Used to file captured traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDirection {
    ToModel,
    ToProvider,
}

impl fmt::Display for TraceDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceDirection::ToModel => f.write_str("to_model"),
            TraceDirection::ToProvider => f.write_str("to_provider"),
        }
    }
}

/// One complete request/response pair as seen on the wire.
#[derive(Debug, Clone)]
pub struct HttpExchange {
    pub method: String,
    pub url: String,
    pub request_headers: Vec<(String, String)>,
    pub request_body: Vec<u8>,
    /// 0 when no response was received (transport failure).
    pub status: u16,
    pub response_headers: Vec<(String, String)>,
    pub response_body: Vec<u8>,
}

impl HttpExchange {
    /// Request serialized as an HTTP/1.1 message.
    pub fn request_bytes(&self) -> Vec<u8> {
        let target = request_target(&self.url);
        let mut out = format!("{} {} HTTP/1.1\r\n", self.method, target).into_bytes();
        for (name, value) in &self.request_headers {
            out.extend_from_slice(format!("{name}: {value}\r\n").as_bytes());
        }
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(&self.request_body);
        out
    }

    /// Response serialized as an HTTP/1.1 message; empty when there was none.
    pub fn response_bytes(&self) -> Vec<u8> {
        if self.status == 0 {
            return Vec::new();
        }
        let mut out = format!("HTTP/1.1 {}\r\n", self.status).into_bytes();
        for (name, value) in &self.response_headers {
            out.extend_from_slice(format!("{name}: {value}\r\n").as_bytes());
        }
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(&self.response_body);
        out
    }
}

fn request_target(url: &str) -> &str {
    match url.find("://") {
        Some(scheme_end) => {
            let rest = &url[scheme_end + 3..];
            match rest.find('/') {
                Some(slash) => &rest[slash..],
                None => "/",
            }
        }
        None => url,
    }
}

/// Receives every exchange made by an [`HttpClient`] it is attached to.
pub trait TraceSink: Send + Sync {
    /// Stores the exchange and returns the trace id, if one was assigned.
    fn capture(&self, direction: TraceDirection, exchange: &HttpExchange) -> Option<String>;
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport error for {url}: {message}")]
    Transport { url: String, message: String },
    #[error("failed to read response body from {url}: {source}")]
    Body {
        url: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub trace_id: Option<String>,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn text_lossy(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

/// A blocking client that reports every exchange to an optional trace sink.
#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    direction: TraceDirection,
    default_headers: Vec<(String, String)>,
    sink: Option<Arc<dyn TraceSink>>,
}

impl fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpClient")
            .field("direction", &self.direction)
            .field("capturing", &self.sink.is_some())
            .finish()
    }
}

impl HttpClient {
    pub fn new(direction: TraceDirection) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(600))
            .build();
        Self {
            agent,
            direction,
            default_headers: Vec::new(),
            sink: None,
        }
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.default_headers.push((name.into(), value.into()));
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn TraceSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn direction(&self) -> TraceDirection {
        self.direction
    }

    pub fn get(&self, url: &str) -> Result<HttpResponse, HttpError> {
        self.request("GET", url, &[], None)
    }

    pub fn post_json(&self, url: &str, body: &[u8]) -> Result<HttpResponse, HttpError> {
        self.request(
            "POST",
            url,
            &[("content-type".to_string(), "application/json".to_string())],
            Some(body),
        )
    }

    /// Sends any method. Non-2xx statuses are returned, not treated as errors.
    pub fn request(
        &self,
        method: &str,
        url: &str,
        extra_headers: &[(String, String)],
        body: Option<&[u8]>,
    ) -> Result<HttpResponse, HttpError> {
        let mut headers: Vec<(String, String)> = self.default_headers.clone();
        headers.extend(extra_headers.iter().cloned());

        let mut request = self.agent.request(method, url);
        for (name, value) in &headers {
            request = request.set(name, value);
        }
        tracing::debug!(%method, %url, "http request");
        let result = match body {
            Some(bytes) => request.send_bytes(bytes),
            None => request.call(),
        };
        let response = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(_, resp)) => resp,
            Err(ureq::Error::Transport(t)) => {
                let exchange = HttpExchange {
                    method: method.to_string(),
                    url: url.to_string(),
                    request_headers: redact(&headers),
                    request_body: body.map(<[u8]>::to_vec).unwrap_or_default(),
                    status: 0,
                    response_headers: Vec::new(),
                    response_body: Vec::new(),
                };
                self.capture(&exchange);
                return Err(HttpError::Transport {
                    url: url.to_string(),
                    message: t.to_string(),
                });
            }
        };

        let status = response.status();
        let response_headers: Vec<(String, String)> = response
            .headers_names()
            .into_iter()
            .filter_map(|name| {
                let value = response.header(&name)?.to_string();
                Some((name, value))
            })
            .collect();
        let mut response_body = Vec::new();
        response
            .into_reader()
            .read_to_end(&mut response_body)
            .map_err(|source| HttpError::Body {
                url: url.to_string(),
                source,
            })?;

        let exchange = HttpExchange {
            method: method.to_string(),
            url: url.to_string(),
            request_headers: redact(&headers),
            request_body: body.map(<[u8]>::to_vec).unwrap_or_default(),
            status,
            response_headers,
            response_body,
        };
        let trace_id = self.capture(&exchange);
        Ok(HttpResponse {
            status,
            headers: exchange.response_headers,
            body: exchange.response_body,
            trace_id,
        })
    }

    fn capture(&self, exchange: &HttpExchange) -> Option<String> {
        self.sink
            .as_ref()
            .and_then(|sink| sink.capture(self.direction, exchange))
    }
}

// Tokens never reach the trace store.
fn redact(headers: &[(String, String)]) -> Vec<(String, String)> {
    headers
        .iter()
        .map(|(name, value)| {
            if name.eq_ignore_ascii_case("private-token") || name.eq_ignore_ascii_case("authorization") {
                (name.clone(), "<redacted>".to_string())
            } else {
                (name.clone(), value.clone())
            }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("address {0} is already in use")]
    PortInUse(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// A running background HTTP server. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL without a trailing slash, e.g. `http://127.0.0.1:4000`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

impl fmt::Debug for ServerHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerHandle").field("addr", &self.addr).finish()
    }
}

pub type Handler = dyn Fn(tiny_http::Request) + Send + Sync;

/// Binds `addr` and answers each request on its own thread.
pub fn serve(addr: &str, handler: Arc<Handler>) -> Result<ServerHandle, ServeError> {
    let listener = TcpListener::bind(addr).map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse(addr.to_string())
        } else {
            ServeError::Bind {
                addr: addr.to_string(),
                source,
            }
        }
    })?;
    let local = listener.local_addr().map_err(|source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let server = Arc::new(
        tiny_http::Server::from_listener(listener, None).map_err(|e| ServeError::Bind {
            addr: addr.to_string(),
            source: std::io::Error::other(e.to_string()),
        })?,
    );
    let accept = Arc::clone(&server);
    let thread = std::thread::spawn(move || {
        for request in accept.incoming_requests() {
            let handler = Arc::clone(&handler);
            std::thread::spawn(move || handler(request));
        }
    });
    Ok(ServerHandle {
        addr: local,
        server,
        thread: Some(thread),
    })
}

/// Reads the whole request body.
pub fn read_body(request: &mut tiny_http::Request) -> std::io::Result<Vec<u8>> {
    let mut body = Vec::new();
    request.as_reader().read_to_end(&mut body)?;
    Ok(body)
}

/// Responds with a JSON body; write errors mean the peer went away and are ignored.
pub fn respond_json(request: tiny_http::Request, status: u16, body: &serde_json::Value) {
    let bytes = serde_json::to_vec(body).unwrap_or_default();
    respond_bytes(request, status, "application/json", bytes);
}

pub fn respond_bytes(request: tiny_http::Request, status: u16, content_type: &str, bytes: Vec<u8>) {
    let header =
        tiny_http::Header::from_bytes("Content-Type", content_type.as_bytes()).expect("static header is valid");
    let response = tiny_http::Response::from_data(bytes)
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_target_strips_scheme_and_host() {
        assert_eq!(request_target("http://h:1/a/b?c=d"), "/a/b?c=d");
        assert_eq!(request_target("http://h:1"), "/");
        assert_eq!(request_target("/x"), "/x");
    }

    #[test]
    fn tokens_are_redacted() {
        let headers = vec![
            ("PRIVATE-TOKEN".to_string(), "secret".to_string()),
            ("accept".to_string(), "json".to_string()),
        ];
        let out = redact(&headers);
        assert_eq!(out[0].1, "<redacted>");
        assert_eq!(out[1].1, "json");
    }

    #[test]
    fn port_in_use_is_reported() {
        let first = serve(
            "127.0.0.1:0",
            Arc::new(|r: tiny_http::Request| respond_json(r, 200, &serde_json::json!({}))),
        )
        .unwrap();
        let err = serve(&first.addr().to_string(), Arc::new(|_r: tiny_http::Request| {})).unwrap_err();
        assert!(matches!(err, ServeError::PortInUse(_)));
    }
}
