//! Read-only static file server for an export directory.

use std::fs::File;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use tiny_http::{Header, Method, Request, Response, Server, StatusCode};
use voltour_core::export::MANIFEST_FILE;

pub struct StaticServer {
    root: PathBuf,
    server: Server,
}

impl StaticServer {
    /// Binds `addr` (e.g. `127.0.0.1:8000`, port 0 for any) over an export directory.
    pub fn bind(root: &Path, addr: &str) -> anyhow::Result<Self> {
        let root = root
            .canonicalize()
            .with_context(|| format!("export directory {}", root.display()))?;
        if !root.join(MANIFEST_FILE).is_file() {
            bail!("{} has no {MANIFEST_FILE}; run `voltour export` first", root.display());
        }
        let server = Server::http(addr).map_err(|e| anyhow!("cannot listen on {addr}: {e}"))?;
        Ok(StaticServer { root, server })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.server.server_addr().to_ip()
    }

    pub fn run(&self) {
        for request in self.server.incoming_requests() {
            let _ = self.respond(request);
        }
    }

    /// Serves one request; exposed so tests can drive the server on a thread.
    pub fn handle_next(&self) -> std::io::Result<()> {
        let request = self.server.recv()?;
        self.respond(request)
    }

    fn respond(&self, request: Request) -> std::io::Result<()> {
        let cors = [
            header("Access-Control-Allow-Origin", "*"),
            header("Access-Control-Allow-Methods", "GET, OPTIONS"),
            header("Access-Control-Allow-Headers", "*"),
        ];
        let mut response = match request.method() {
            Method::Get => match resolve_request_path(&self.root, request.url()) {
                Some(path) => match File::open(&path) {
                    Ok(file) => Response::from_file(file)
                        .with_header(header("Content-Type", content_type(&path)))
                        .boxed(),
                    Err(_) => not_found(),
                },
                None => not_found(),
            },
            Method::Options => Response::empty(StatusCode(204)).boxed(),
            _ => Response::from_string("method not allowed\n")
                .with_status_code(405)
                .with_header(header("Allow", "GET, OPTIONS"))
                .boxed(),
        };
        for h in cors {
            response.add_header(h);
        }
        request.respond(response)
    }
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header")
}

fn not_found() -> tiny_http::ResponseBox {
    Response::from_string("not found\n").with_status_code(404).boxed()
}

fn percent_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Maps a request URL to a regular file under `root`, refusing anything that
/// could escape it.
pub fn resolve_request_path(root: &Path, url: &str) -> Option<PathBuf> {
    let path = url.split(['?', '#']).next()?;
    let decoded = percent_decode(path)?;
    if decoded.contains('\0') || decoded.contains('\\') {
        return None;
    }
    let relative = Path::new(decoded.trim_start_matches('/'));
    if relative.as_os_str().is_empty() {
        return None;
    }
    if !relative.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = root.join(relative).canonicalize().ok()?;
    (full.starts_with(root) && full.is_file()).then_some(full)
}

pub fn content_type(path: &Path) -> &'static str {
    if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        return "application/json";
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("txt") | Some("trace") | Some("script") => "text/plain; charset=utf-8",
        Some("ppm") => "image/x-portable-pixmap",
        Some("mp4") => "video/mp4",
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        _ => "application/octet-stream",
    }
}
