//! Local server exposing any [`LmBackend`] over the wire protocol, with
//! optional per-endpoint fault injection for client conformance tests.

use std::collections::HashMap;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use super::http::{
    DetokenizeRequest, DetokenizeResponse, LogprobsRequest, LogprobsResponse, MetaResponse, TokenizeRequest,
    TokenizeResponse,
};
use super::{LmBackend, LmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Meta,
    Logprobs,
    Tokenize,
    Detokenize,
}

impl Endpoint {
    fn from_path(path: &str) -> Option<Self> {
        match path {
            "/v1/meta" => Some(Endpoint::Meta),
            "/v1/logprobs" => Some(Endpoint::Logprobs),
            "/v1/tokenize" => Some(Endpoint::Tokenize),
            "/v1/detokenize" => Some(Endpoint::Detokenize),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    /// Reply with this status and a short body.
    Status(u16),
    /// Reply 200 with a body that is not JSON.
    NotJson,
    /// Reply 200 with JSON lacking the expected field.
    MissingField,
    /// Logprobs row one entry short.
    WrongLength,
    /// Logprobs row that does not sum to one.
    Unnormalized,
    /// Tokenize ids beyond the vocabulary.
    BadIds,
    /// Sleep before answering normally.
    Delay(Duration),
}

/// Builder for [`StubServer`].
pub struct StubBuilder {
    backend: Arc<dyn LmBackend>,
    faults: HashMap<Endpoint, Fault>,
}

impl StubBuilder {
    pub fn fault(mut self, endpoint: Endpoint, fault: Fault) -> Self {
        self.faults.insert(endpoint, fault);
        self
    }

    /// Binds `127.0.0.1` on an ephemeral port and starts serving.
    pub fn start(self) -> std::io::Result<StubServer> {
        self.start_on("127.0.0.1:0")
    }

    pub fn start_on(self, addr: &str) -> std::io::Result<StubServer> {
        let server = Server::http(addr).map_err(std::io::Error::other)?;
        let server = Arc::new(server);
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("stub server is not bound to an IP address"))?;
        let worker = Arc::clone(&server);
        let backend = self.backend;
        let faults = Arc::new(self.faults);
        let handle = std::thread::spawn(move || {
            for request in worker.incoming_requests() {
                let backend = Arc::clone(&backend);
                let faults = Arc::clone(&faults);
                std::thread::spawn(move || handle(request, backend.as_ref(), &faults));
            }
        });
        Ok(StubServer { server, port, handle: Some(handle) })
    }
}

/// Running stub; shuts down on drop.
pub struct StubServer {
    server: Arc<Server>,
    port: u16,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn builder(backend: Arc<dyn LmBackend>) -> StubBuilder {
        StubBuilder { backend, faults: HashMap::new() }
    }

    pub fn start(backend: Arc<dyn LmBackend>) -> std::io::Result<Self> {
        Self::builder(backend).start()
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// Blocks until the server stops (it only stops when dropped elsewhere).
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_response<T: Serialize>(code: u16, value: &T) -> Response<std::io::Cursor<Vec<u8>>> {
    text_response(code, serde_json::to_string(value).unwrap_or_default())
}

fn text_response(code: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
    Response::from_string(body).with_status_code(code).with_header(header)
}

fn error_body(err: &LmError) -> (u16, String) {
    let code = match err {
        LmError::OutOfVocabulary(_) | LmError::InvalidToken(_) => 400,
        _ => 500,
    };
    (code, serde_json::json!({ "error": err.to_string() }).to_string())
}

fn handle(mut request: Request, backend: &dyn LmBackend, faults: &HashMap<Endpoint, Fault>) {
    let path = request.url().split('?').next().unwrap_or("").to_owned();
    let Some(endpoint) = Endpoint::from_path(&path) else {
        let _ = request.respond(text_response(404, r#"{"error":"not found"}"#.into()));
        return;
    };
    let expected_method = if endpoint == Endpoint::Meta { Method::Get } else { Method::Post };
    if *request.method() != expected_method {
        let _ = request.respond(text_response(405, r#"{"error":"method not allowed"}"#.into()));
        return;
    }
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        let _ = request.respond(text_response(400, r#"{"error":"unreadable body"}"#.into()));
        return;
    }

    let fault = faults.get(&endpoint);
    if let Some(Fault::Delay(d)) = fault {
        std::thread::sleep(*d);
    }
    match fault {
        Some(Fault::Status(code)) => {
            let _ = request.respond(text_response(*code, r#"{"error":"injected"}"#.into()));
            return;
        }
        Some(Fault::NotJson) => {
            let _ = request.respond(text_response(200, "this is not json".into()));
            return;
        }
        Some(Fault::MissingField) => {
            let _ = request.respond(text_response(200, r#"{"unexpected":true}"#.into()));
            return;
        }
        _ => {}
    }

    let response = match endpoint {
        Endpoint::Meta => json_response(
            200,
            &MetaResponse { vocab: backend.vocab().to_vec(), bos: backend.bos(), eos: backend.eos() },
        ),
        Endpoint::Logprobs => match serde_json::from_str::<LogprobsRequest>(&body) {
            Err(e) => text_response(400, serde_json::json!({ "error": e.to_string() }).to_string()),
            Ok(req) => match backend.next_logprobs(&req.prefix) {
                Err(e) => {
                    let (code, body) = error_body(&e);
                    text_response(code, body)
                }
                Ok(mut row) => {
                    match fault {
                        Some(Fault::WrongLength) => {
                            row.pop();
                        }
                        Some(Fault::Unnormalized) => {
                            for x in &mut row {
                                *x += 0.5;
                            }
                        }
                        _ => {}
                    }
                    json_response(200, &LogprobsResponse { logprobs: row })
                }
            },
        },
        Endpoint::Tokenize => match serde_json::from_str::<TokenizeRequest>(&body) {
            Err(e) => text_response(400, serde_json::json!({ "error": e.to_string() }).to_string()),
            Ok(req) => match backend.tokenize(&req.text) {
                Err(e) => {
                    let (code, body) = error_body(&e);
                    text_response(code, body)
                }
                Ok(mut ids) => {
                    if fault == Some(&Fault::BadIds) {
                        ids.push(u32::MAX - 1);
                    }
                    json_response(200, &TokenizeResponse { ids })
                }
            },
        },
        Endpoint::Detokenize => match serde_json::from_str::<DetokenizeRequest>(&body) {
            Err(e) => text_response(400, serde_json::json!({ "error": e.to_string() }).to_string()),
            Ok(req) => match backend.detokenize(&req.ids) {
                Err(e) => {
                    let (code, body) = error_body(&e);
                    text_response(code, body)
                }
                Ok(text) => json_response(200, &DetokenizeResponse { text }),
            },
        },
    };
    let _ = request.respond(response);
}
