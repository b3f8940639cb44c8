//! Helpers shared by the integration test targets: spawning the CLI
//! binary, a minimal blocking HTTP/1.1 client for the collection service,
//! and synthetic WAV construction.

#![allow(dead_code)] // each test target uses its own subset

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use coughscreen::audio::{write_wav, AudioClip};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_coughscreen"))
}

/// Runs the CLI in `dir` and waits for it to finish.
pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).args(args).current_dir(dir).output().expect("binary spawns")
}

pub fn stdout_str(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr_str(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A mono 16 kHz sine WAV of the given length. Distinct frequencies give
/// distinct sample ids.
pub fn wav_seconds(seconds: f64, freq: f64) -> Vec<u8> {
    let n = (seconds * 16_000.0).round() as usize;
    let samples: Vec<f64> = (0..n)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
        .collect();
    write_wav(&AudioClip::mono(samples, 16_000).expect("valid clip"))
}

/// Metadata accepted by the default continental region allowlist.
pub fn valid_metadata() -> String {
    r#"{"age_bucket":"30-39","gender":"female","mother_tongue":"en","region":"europe"}"#
        .to_string()
}

/// A running `coughscreen serve` child; killed on drop.
pub struct Server {
    pub child: Child,
    pub addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Writes `config` to `dir/serve.conf`, spawns `coughscreen --config
/// serve.conf serve` in `dir`, and waits for its "listening on" line to
/// learn the bound address.
pub fn spawn_serve(dir: &Path, config: &str) -> Server {
    std::fs::write(dir.join("serve.conf"), config).expect("write serve config");
    let mut child = Command::new(bin())
        .args(["--config", "serve.conf", "serve"])
        .current_dir(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("serve spawns");
    let stdout = child.stdout.take().expect("stdout piped");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        let mut line = String::new();
        if reader.read_line(&mut line).is_ok() {
            let _ = tx.send(line);
        }
        // Keep draining so the child never blocks on a full pipe.
        let mut sink = String::new();
        while reader.read_line(&mut sink).map(|n| n > 0).unwrap_or(false) {
            sink.clear();
        }
    });
    let line = rx.recv_timeout(Duration::from_secs(20)).expect("server announces its address");
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("unexpected announce line {line:?}"))
        .to_string();
    Server { child, addr }
}

/// Sends one raw HTTP/1.1 request and returns (status, full response text).
/// Handles both content-length and chunked bodies well enough for tests.
pub fn http_raw(addr: &str, raw: &[u8]) -> (u16, Vec<u8>) {
    try_http_raw(addr, raw).expect("http request")
}

/// Like [`http_raw`] but reports connection trouble instead of panicking,
/// for tests that race requests against a dying server.
pub fn try_http_raw(addr: &str, raw: &[u8]) -> std::io::Result<(u16, Vec<u8>)> {
    use std::io::{Error, ErrorKind};

    let mut stream = TcpStream::connect(addr)?;
    stream.write_all(raw)?;
    let mut response = Vec::new();
    stream.read_to_end(&mut response)?;
    let head_end = find_subsequence(&response, b"\r\n\r\n")
        .ok_or_else(|| Error::new(ErrorKind::UnexpectedEof, "incomplete response header"))?
        + 4;
    let head = String::from_utf8_lossy(&response[..head_end]).into_owned();
    let status: u16 = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::new(ErrorKind::InvalidData, format!("bad status line in {head:?}")))?;
    let mut body = response[head_end..].to_vec();
    if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        body = decode_chunked(&body);
    }
    Ok((status, body))
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn decode_chunked(mut body: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let Some(line_end) = find_subsequence(body, b"\r\n") else { break };
        let size_text = String::from_utf8_lossy(&body[..line_end]);
        let size = usize::from_str_radix(size_text.trim(), 16).unwrap_or(0);
        if size == 0 {
            break;
        }
        let start = line_end + 2;
        out.extend_from_slice(&body[start..start + size]);
        body = &body[start + size + 2..];
    }
    out
}

pub fn http_get(addr: &str, path: &str) -> (u16, Vec<u8>) {
    let raw =
        format!("GET {path} HTTP/1.1\r\nHost: test\r\nConnection: close\r\n\r\n").into_bytes();
    http_raw(addr, &raw)
}

/// Multipart upload of one sample; returns (status, body bytes).
pub fn http_post_sample(addr: &str, kind: &str, metadata: &str, audio: &[u8]) -> (u16, Vec<u8>) {
    let raw = post_sample_request(kind, metadata, audio);
    http_raw(addr, &raw)
}

/// Non-panicking variant of [`http_post_sample`].
pub fn try_post_sample(
    addr: &str,
    kind: &str,
    metadata: &str,
    audio: &[u8],
) -> std::io::Result<(u16, Vec<u8>)> {
    let raw = post_sample_request(kind, metadata, audio);
    try_http_raw(addr, &raw)
}

fn post_sample_request(kind: &str, metadata: &str, audio: &[u8]) -> Vec<u8> {
    let boundary = "xITESTBOUNDARYx";
    let mut body = Vec::new();
    for (name, value) in [("kind", kind), ("metadata", metadata)] {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n"
            )
            .as_bytes(),
        );
    }
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"audio\"; filename=\"a.wav\"\r\nContent-Type: audio/wav\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(audio);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());

    let mut raw = format!(
        "POST /v1/samples HTTP/1.1\r\nHost: test\r\nConnection: close\r\nContent-Type: multipart/form-data; boundary={boundary}\r\nContent-Length: {}\r\n\r\n",
        body.len()
    )
    .into_bytes();
    raw.extend_from_slice(&body);
    raw
}

pub fn body_json(body: &[u8]) -> serde_json::Value {
    serde_json::from_slice(body)
        .unwrap_or_else(|e| panic!("body is not JSON ({e}): {:?}", String::from_utf8_lossy(body)))
}
