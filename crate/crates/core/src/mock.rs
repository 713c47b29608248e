//! Minimal loopback HTTP/1.1 server for exercising the HTTP-facing pieces
//! (model client, webhook, external detector/OCR) without any real network.
//! Test support only: scripted, single-threaded, connection-per-request.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

/// One request as seen on the wire.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    /// Header names lowercased; values verbatim.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl RecordedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn body_json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).expect("request body is JSON")
    }
}

/// What the script tells the server to do with a request.
pub enum MockReply {
    Respond(MockResponse),
    /// Close the connection without writing anything (transport error).
    Close,
}

pub struct MockResponse {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl MockResponse {
    pub fn json(status: u16, value: serde_json::Value) -> MockReply {
        MockReply::Respond(Self {
            status,
            content_type: "application/json".into(),
            body: value.to_string().into_bytes(),
        })
    }

    pub fn text(status: u16, body: &str) -> MockReply {
        MockReply::Respond(Self {
            status,
            content_type: "text/plain".into(),
            body: body.as_bytes().to_vec(),
        })
    }
}

type Responder = dyn Fn(usize, &RecordedRequest) -> MockReply + Send + Sync;

struct ServerState {
    hits: AtomicUsize,
    requests: Mutex<Vec<RecordedRequest>>,
    stop: AtomicBool,
}

/// Scripted HTTP server bound to an ephemeral loopback port.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<ServerState>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Starts a server whose behavior is `responder(hit_index, request)`.
    pub fn start(
        responder: impl Fn(usize, &RecordedRequest) -> MockReply + Send + Sync + 'static,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let state = Arc::new(ServerState {
            hits: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let thread_state = Arc::clone(&state);
        let responder: Box<Responder> = Box::new(responder);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if thread_state.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(mut stream) = stream else { continue };
                // parse failures (e.g. the wake-up connect) are ignored
                if let Some(req) = read_request(&mut stream) {
                    let idx = thread_state.hits.fetch_add(1, Ordering::SeqCst);
                    thread_state
                        .requests
                        .lock()
                        .expect("mock lock")
                        .push(req.clone());
                    match responder(idx, &req) {
                        MockReply::Respond(resp) => write_response(stream, &resp),
                        MockReply::Close => drop(stream),
                    }
                }
            }
        });
        Ok(Self {
            addr,
            state,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url_with_path(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn hits(&self) -> usize {
        self.state.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.requests.lock().expect("mock lock").clone()
    }

    // ----- canned scripts ---------------------------------------------

    /// Chat-completions endpoint that always answers with `content`.
    pub fn lmm_fixed(content: &str) -> std::io::Result<Self> {
        let content = content.to_string();
        Self::start(move |_, _| MockResponse::json(200, chat_envelope(&content)))
    }

    /// Fails the first `failures` hits with `status`, then answers.
    pub fn lmm_fail_then(failures: usize, status: u16, content: &str) -> std::io::Result<Self> {
        let content = content.to_string();
        Self::start(move |i, _| {
            if i < failures {
                MockResponse::json(status, serde_json::json!({"error": "scripted failure"}))
            } else {
                MockResponse::json(200, chat_envelope(&content))
            }
        })
    }

    /// Returns 200 with a JSON body that is not a chat envelope.
    pub fn lmm_bad_envelope() -> std::io::Result<Self> {
        Self::start(|_, _| MockResponse::json(200, serde_json::json!({"unexpected": true})))
    }

    /// Answers each hit with the matching status (last one repeats).
    /// Successful hits get an empty JSON object body.
    pub fn status_sequence(statuses: Vec<u16>) -> std::io::Result<Self> {
        assert!(!statuses.is_empty());
        Self::start(move |i, _| {
            let status = *statuses.get(i).unwrap_or(statuses.last().expect("non-empty"));
            MockResponse::json(status, serde_json::json!({}))
        })
    }

    /// Closes every connection without responding.
    pub fn always_drop() -> std::io::Result<Self> {
        Self::start(|_, _| MockReply::Close)
    }

    /// External detector endpoint with a fixed box.
    pub fn detector_fixed(x: u32, y: u32, w: u32, h: u32, confidence: f64) -> std::io::Result<Self> {
        Self::start(move |_, _| {
            MockResponse::json(
                200,
                serde_json::json!({"x": x, "y": y, "w": w, "h": h, "confidence": confidence}),
            )
        })
    }

    /// External OCR endpoint with a fixed reading.
    pub fn ocr_fixed(text: &str) -> std::io::Result<Self> {
        let text = text.to_string();
        Self::start(move |_, _| MockResponse::json(200, serde_json::json!({"text": text})))
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.state.stop.store(true, Ordering::SeqCst);
        // unblock the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// OpenAI-style chat envelope with a single text answer.
pub fn chat_envelope(content: &str) -> serde_json::Value {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
}

fn read_request(stream: &mut TcpStream) -> Option<RecordedRequest> {
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .ok()?;
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    };

    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = head.lines();
    let request_line = lines.next()?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();

    let mut headers = Vec::new();
    let mut content_length = 0usize;
    for line in lines {
        let (name, value) = line.split_once(':')?;
        let name = name.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if name == "content-length" {
            content_length = value.parse().ok()?;
        }
        headers.push((name, value));
    }

    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);

    Some(RecordedRequest {
        method,
        path,
        headers,
        body,
    })
}

fn write_response(mut stream: TcpStream, resp: &MockResponse) {
    let reason = match resp.status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        422 => "Unprocessable Entity",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        resp.status,
        reason,
        resp.content_type,
        resp.body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(&resp.body);
    let _ = stream.flush();
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|w| w == needle)
}
