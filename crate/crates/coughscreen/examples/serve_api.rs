//! Exercise the collection service over real HTTP: bind an ephemeral port,
//! upload a sample with a hand-rolled multipart request, read it back, and
//! shut the server down gracefully.
//!
//! For production use run `coughscreen serve` with a config file instead.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::TcpStream;

use coughscreen::audio::{write_wav, AudioClip};
use coughscreen::config::DEFAULT_REGIONS;
use coughscreen::ingest::{http::serve_on, Store};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let regions: BTreeSet<String> = DEFAULT_REGIONS.iter().map(|s| s.to_string()).collect();
    let store = Store::open(dir.path().join("store"), regions)?;

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = runtime.spawn(serve_on(listener, store, 60, async {
        let _ = stopped.await;
    }));
    println!("service listening on http://{addr}");

    let (status, body) = request(&addr.to_string(), &get("/v1/healthz"))?;
    println!("GET /v1/healthz -> {status} {body}");

    let samples: Vec<f64> = (0..12 * 16_000)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 392.0 * i as f64 / 16_000.0).sin())
        .collect();
    let wav = write_wav(&AudioClip::mono(samples, 16_000)?);
    let metadata = r#"{"age_bucket":"30-39","gender":"non_binary","mother_tongue":"fi","region":"europe"}"#;
    let (status, body) = request(&addr.to_string(), &post_sample(metadata, &wav))?;
    println!("POST /v1/samples -> {status} {body}");

    let id = body
        .split("\"sample_id\":\"")
        .nth(1)
        .and_then(|rest| rest.split('"').next())
        .expect("response carries a sample id");
    let (status, body) = request(&addr.to_string(), &get(&format!("/v1/samples/{id}")))?;
    println!("GET /v1/samples/{}... -> {status} {}", &id[..12], &body[..body.len().min(120)]);

    let _ = stop.send(());
    runtime.block_on(server)??;
    println!("server drained and stopped");
    Ok(())
}

fn get(path: &str) -> Vec<u8> {
    format!("GET {path} HTTP/1.1\r\nHost: demo\r\nConnection: close\r\n\r\n").into_bytes()
}

fn post_sample(metadata: &str, wav: &[u8]) -> Vec<u8> {
    let boundary = "xDEMOBOUNDARYx";
    let mut body = Vec::new();
    for (name, value) in [("kind", "cough"), ("metadata", metadata)] {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n")
                .as_bytes(),
        );
    }
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"audio\"; filename=\"cough.wav\"\r\nContent-Type: audio/wav\r\n\r\n")
            .as_bytes(),
    );
    body.extend_from_slice(wav);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let mut raw = format!(
        "POST /v1/samples HTTP/1.1\r\nHost: demo\r\nConnection: close\r\nContent-Type: multipart/form-data; boundary={boundary}\r\nContent-Length: {}\r\n\r\n",
        body.len()
    )
    .into_bytes();
    raw.extend_from_slice(&body);
    raw
}

/// Minimal HTTP/1.1 client: one request, connection close, body as text.
fn request(addr: &str, raw: &[u8]) -> std::io::Result<(u16, String)> {
    let mut stream = TcpStream::connect(addr)?;
    stream.write_all(raw)?;
    let mut response = Vec::new();
    stream.read_to_end(&mut response)?;
    let text = String::from_utf8_lossy(&response);
    let status = text
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let body = text
        .split("\r\n\r\n")
        .nth(1)
        .unwrap_or("")
        .lines()
        .filter(|l| l.starts_with('{'))
        .collect::<Vec<_>>()
        .join("");
    Ok((status, body))
}
