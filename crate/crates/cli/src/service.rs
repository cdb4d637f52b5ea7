//! Minimal synchronous HTTP analysis service.
//!
//! `POST /v1/analyze` takes `{app_id, device_id, syscalls}` and answers
//! `{label, p_value, I, n_effective}`; `GET /v1/health` reports store
//! statistics. One thread per connection; the store is loaded once and
//! only read afterwards.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use bootscan_core::config::PipelineConfig;
use bootscan_core::ensemble::ReferenceStore;
use bootscan_core::eval::{self, VerdictRecord};
use bootscan_core::trace::{encode_names, Alphabet, Label};
use bootscan_core::Error;

struct State {
    store: ReferenceStore,
    alphabet: Alphabet,
    config: PipelineConfig,
}

#[derive(Deserialize)]
struct AnalyzeRequest {
    app_id: String,
    device_id: String,
    syscalls: Vec<String>,
}

/// Bind, announce the bound address on stdout, and serve forever.
pub fn serve(
    addr: &str,
    store: ReferenceStore,
    alphabet: Alphabet,
    config: PipelineConfig,
) -> anyhow::Result<()> {
    let listener = TcpListener::bind(addr)?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let state = Arc::new(State {
        store,
        alphabet,
        config,
    });
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let state = Arc::clone(&state);
        std::thread::spawn(move || {
            if let Err(err) = handle(stream, &state) {
                eprintln!("connection error: {err:#}");
            }
        });
    }
    Ok(())
}

fn handle(mut stream: TcpStream, state: &State) -> anyhow::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((key, value)) = line.split_once(':') {
            if key.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, payload) = route(&method, &path, &body, state);
    respond(&mut stream, status, &payload)
}

fn route(method: &str, path: &str, body: &[u8], state: &State) -> (u16, serde_json::Value) {
    match (method, path) {
        ("GET", "/v1/health") => health(state),
        ("POST", "/v1/analyze") => analyze(body, state),
        _ => (404, json!({ "error": format!("no route {method} {path}") })),
    }
}

fn health(state: &State) -> (u16, serde_json::Value) {
    let apps: Vec<serde_json::Value> = state
        .store
        .app_ids()
        .map(|app_id| json!({ "app_id": app_id, "samples": state.store.len(app_id) }))
        .collect();
    (200, json!({ "status": "ok", "apps": apps }))
}

fn analyze(body: &[u8], state: &State) -> (u16, serde_json::Value) {
    let request: AnalyzeRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => return (400, json!({ "error": format!("malformed request: {e}") })),
    };
    if request.syscalls.is_empty() {
        return (400, json!({ "error": "empty syscall list" }));
    }
    let (raw, _) = encode_names(
        &request.syscalls,
        &state.alphabet,
        &request.app_id,
        &request.device_id,
        Label::Unknown,
    );
    match eval::analyze(&raw, &state.store, &request.app_id, &state.config) {
        Ok((verdict, _)) => {
            let record = VerdictRecord::from_verdict(&request.app_id, &request.device_id, &verdict);
            (200, serde_json::to_value(record).unwrap_or_else(|e| json!({ "error": e.to_string() })))
        }
        Err(err) if is_unknown_app(&err) => (404, json!({ "error": err.to_string() })),
        Err(err) => (400, json!({ "error": err.to_string() })),
    }
}

fn is_unknown_app(err: &Error) -> bool {
    match err {
        Error::UnknownApp(_) => true,
        Error::Stage { source, .. } => is_unknown_app(source),
        _ => false,
    }
}

fn respond(stream: &mut TcpStream, status: u16, payload: &serde_json::Value) -> anyhow::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Internal Server Error",
    };
    let body = payload.to_string();
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()?;
    Ok(())
}
