//! Read-only static file endpoint sharing the stream port.

use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};

use percent_encoding::percent_decode_str;

use crate::curation::REPORT_FILE;

/// Largest accepted request head, bytes.
pub const MAX_HEAD: usize = 16 * 1024;

/// Files reachable over HTTP.
#[derive(Clone, Debug, Default)]
pub struct StaticFiles {
    /// Served at `/curation_report.json`.
    pub report: Option<PathBuf>,
    /// Served below `/`; `/` maps to `index.html`.
    pub root: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    fn text(status: u16, body: &str) -> Self {
        Self { status, content_type: "text/plain; charset=utf-8", body: body.as_bytes().to_vec() }
    }

    pub fn write_to(&self, out: &mut impl Write, include_body: bool) -> io::Result<()> {
        let reason = match self.status {
            200 => "OK",
            400 => "Bad Request",
            404 => "Not Found",
            405 => "Method Not Allowed",
            _ => "Error",
        };
        write!(
            out,
            "HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nAccess-Control-Allow-Origin: *\r\nConnection: close\r\n\r\n",
            self.status,
            reason,
            self.content_type,
            self.body.len()
        )?;
        if include_body {
            out.write_all(&self.body)?;
        }
        out.flush()
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" => "application/json",
        "jsonl" => "application/x-ndjson",
        "png" => "image/png",
        "svg" => "image/svg+xml",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// Decoded relative path of a request target, or `None` when it could
/// leave the served directory.
pub fn sanitize(target: &str) -> Option<PathBuf> {
    let path = target.split(['?', '#']).next().unwrap_or("");
    let decoded = percent_decode_str(path).decode_utf8().ok()?;
    if decoded.contains('\0') || decoded.contains('\\') {
        return None;
    }
    let relative = decoded.trim_start_matches('/');
    let mut out = PathBuf::new();
    for component in Path::new(relative).components() {
        match component {
            Component::Normal(part) => out.push(part),
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(out)
}

fn read_file(path: &Path) -> Response {
    match std::fs::read(path) {
        Ok(body) => Response { status: 200, content_type: content_type(path), body },
        Err(_) => Response::text(404, "not found\n"),
    }
}

impl StaticFiles {
    pub fn respond(&self, method: &str, target: &str) -> Response {
        if method != "GET" && method != "HEAD" {
            return Response::text(405, "only GET and HEAD are supported\n");
        }
        let Some(relative) = sanitize(target) else {
            return Response::text(400, "invalid path\n");
        };
        if relative == Path::new(REPORT_FILE) {
            if let Some(report) = &self.report {
                return read_file(report);
            }
        }
        let Some(root) = &self.root else {
            return Response::text(404, "not found\n");
        };
        let mut path = root.join(&relative);
        if path.is_dir() {
            path.push("index.html");
        }
        // Symlinks must not lead outside the root either.
        match (path.canonicalize(), root.canonicalize()) {
            (Ok(real), Ok(base)) if real.starts_with(&base) => read_file(&real),
            _ => Response::text(404, "not found\n"),
        }
    }
}
