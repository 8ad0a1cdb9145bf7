//! HTTP gateway: a web front-end over a backing node, translating
//! `/ipfs/...` and `/ipns/...` URL paths into network retrievals.
//!
//! The HTTP layer is plain HTTP/1.1 over std TCP. All node interaction
//! funnels through the shared simulator lock, so concurrent requests are
//! serialized onto the backing node; repeat requests for a cached CID
//! are served from the blockstore without network traffic.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::node::NodeError;
use crate::simnet::Sim;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub listen_address: String,
    pub request_timeout: u64,
    pub backing_node: usize,
}

/// A fully materialized HTTP response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayResponse {
    pub status: u16,
    pub content_cid: Option<String>,
    pub body: Vec<u8>,
}

impl GatewayResponse {
    fn error(status: u16, message: &str) -> GatewayResponse {
        GatewayResponse { status, content_cid: None, body: format!("{message}\n").into_bytes() }
    }
}

fn status_text(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        500 => "Internal Server Error",
        504 => "Gateway Timeout",
        _ => "Unknown",
    }
}

/// Map a node-layer failure onto an HTTP status. Absence of a bare CID is
/// indistinguishable from slowness in an open network, so both surface as
/// 504; 404 is reserved for definite path-resolution failures.
fn status_for(err: &NodeError) -> u16 {
    match err {
        NodeError::InvalidPath(_) | NodeError::InvalidName(_) => 400,
        NodeError::SegmentNotFound(_) | NodeError::NotADirectory(_) => 404,
        NodeError::NoRecord(_) | NodeError::MalformedDnslink(_) => 404,
        NodeError::NotFound | NodeError::Timeout => 504,
        NodeError::IntegrityViolation => 504,
        NodeError::RecursionLimit | NodeError::InvalidSignature => 504,
        NodeError::StorageFull => 500,
    }
}

/// Serve one GET. Success is the exact reassembled bytes plus the
/// resolved root CID in X-Content-Cid.
pub fn handle_get(sim: &mut Sim, backing_node: usize, path: &str) -> GatewayResponse {
    if !(path.starts_with("/ipfs/") || path.starts_with("/ipns/")) {
        return GatewayResponse::error(400, "path must start with /ipfs/ or /ipns/");
    }
    match sim.resolve_and_get(backing_node, path) {
        Ok((cid, body)) => GatewayResponse {
            status: 200,
            content_cid: Some(cid.to_text()),
            body,
        },
        Err(err) => GatewayResponse::error(status_for(&err), &err.to_string()),
    }
}

/// A running gateway bound to a local address.
pub struct ServerHandle {
    pub local_addr: std::net::SocketAddr,
    shutdown: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // unblock accept
        let _ = TcpStream::connect(self.local_addr);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.local_addr);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("address in use or unbindable: {0}")]
    Bind(#[from] std::io::Error),
    #[error("backing node {0} is not alive")]
    DeadBackingNode(usize),
}

/// Bind the listen address and serve until stopped. Requests are handled
/// on their own threads; the simulator lock serializes node access.
pub fn serve(config: GatewayConfig, sim: Arc<Mutex<Sim>>) -> Result<ServerHandle, ServeError> {
    {
        let sim = sim.lock().unwrap();
        if !sim.is_alive(config.backing_node) {
            return Err(ServeError::DeadBackingNode(config.backing_node));
        }
    }
    let listener = TcpListener::bind(&config.listen_address)?;
    let local_addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let stop = Arc::clone(&shutdown);
    let backing = config.backing_node;
    let join = std::thread::spawn(move || {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        for stream in listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let sim = Arc::clone(&sim);
            workers.push(std::thread::spawn(move || {
                let _ = handle_connection(stream, &sim, backing);
            }));
        }
        // drain in-flight requests before exiting
        for w in workers {
            let _ = w.join();
        }
    });
    Ok(ServerHandle { local_addr, shutdown, join: Some(join) })
}

fn handle_connection(
    stream: TcpStream,
    sim: &Arc<Mutex<Sim>>,
    backing: usize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("");
    let raw_path = parts.next().unwrap_or("/");
    // drain headers
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
    }
    let response = if method != "GET" {
        GatewayResponse::error(405, "only GET is supported")
    } else {
        let path = percent_decode(raw_path.split('?').next().unwrap_or(raw_path));
        let mut sim = sim.lock().unwrap();
        if sim.is_alive(backing) {
            handle_get(&mut sim, backing, &path)
        } else {
            GatewayResponse::error(500, "backing node is down")
        }
    };
    write_response(stream, &response)
}

fn write_response(mut stream: TcpStream, resp: &GatewayResponse) -> std::io::Result<()> {
    let mut head = format!(
        "HTTP/1.1 {} {}\r\ncontent-type: application/octet-stream\r\ncontent-length: {}\r\n",
        resp.status,
        status_text(resp.status),
        resp.body.len()
    );
    if let Some(cid) = &resp.content_cid {
        head.push_str(&format!("x-content-cid: {cid}\r\n"));
    }
    head.push_str("connection: close\r\n\r\n");
    stream.write_all(head.as_bytes())?;
    stream.write_all(&resp.body)?;
    stream.flush()
}

fn percent_decode(path: &str) -> String {
    let bytes = path.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(v) = u8::from_str_radix(&path[i + 1..i + 3], 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Minimal HTTP GET client for tests and the CLI.
pub fn http_get(addr: &std::net::SocketAddr, path: &str) -> std::io::Result<(u16, Vec<u8>, Option<String>)> {
    let mut stream = TcpStream::connect(addr)?;
    write!(stream, "GET {path} HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n")?;
    let mut reader = BufReader::new(stream);
    let mut status_line = String::new();
    reader.read_line(&mut status_line)?;
    let status: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let mut content_cid = None;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
        if let Some(v) = line
            .strip_prefix("x-content-cid:")
            .or_else(|| line.strip_prefix("X-Content-Cid:"))
        {
            content_cid = Some(v.trim().to_string());
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    Ok((status, body, content_cid))
}
