#![allow(dead_code)]

use std::sync::Arc;

use rerender_core::Frame;
use rerender_server::config::{ServerConfig, UserConfig};
use rerender_server::AppState;
use serde_json::{json, Value};
use tempfile::TempDir;
use tokio::sync::oneshot;

pub const USERS: [(&str, &str); 2] = [("alice", "alice-pw"), ("bob", "bob-pw")];

pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    pub client: reqwest::Client,
    shutdown: Option<oneshot::Sender<()>>,
    _dir: TempDir,
}

impl TestServer {
    pub async fn start() -> Self {
        Self::start_with(|_| {}).await
    }

    pub async fn start_with(configure: impl FnOnce(&mut ServerConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ServerConfig::new(dir.path());
        cfg.port = 0;
        for (name, pw) in USERS {
            cfg.users.push(UserConfig {
                name: name.into(),
                password: Some(pw.into()),
                password_hash: None,
                sources: vec![],
            });
        }
        configure(&mut cfg);
        let state = AppState::open(cfg.clone()).unwrap();
        let listener = rerender_server::bind(&cfg).await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel::<()>();
        let st = state.clone();
        tokio::spawn(async move {
            rerender_server::serve(listener, st, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        TestServer { base, state, client: reqwest::Client::new(), shutdown: Some(tx), _dir: dir }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn login(&self, user: &str, password: &str) -> reqwest::Response {
        self.client.post(self.url("/login")).json(&json!({ "user": user, "password": password })).send().await.unwrap()
    }

    pub async fn token(&self, user: &str) -> String {
        let pw = USERS.iter().find(|(u, _)| *u == user).unwrap().1;
        let v: Value = self.login(user, pw).await.json().await.unwrap();
        v["token"].as_str().unwrap().to_string()
    }

    pub async fn get(&self, token: &str, path: &str) -> reqwest::Response {
        self.client.get(self.url(path)).bearer_auth(token).send().await.unwrap()
    }

    pub async fn send(&self, method: reqwest::Method, token: &str, path: &str, body: Value) -> reqwest::Response {
        self.client.request(method, self.url(path)).bearer_auth(token).json(&body).send().await.unwrap()
    }

    pub async fn post(&self, token: &str, path: &str, body: Value) -> reqwest::Response {
        self.send(reqwest::Method::POST, token, path, body).await
    }

    pub async fn patch(&self, token: &str, path: &str, body: Value) -> reqwest::Response {
        self.send(reqwest::Method::PATCH, token, path, body).await
    }

    pub async fn annotate(&self, token: &str, rid: &str, label: &str, region: Value) -> reqwest::Response {
        self.post(token, &format!("/history/{rid}/annotate"), json!({ "region": region, "label": label })).await
    }

    /// Registers a synthetic source and starts a session on it.
    pub async fn synthetic_session(&self, token: &str, source_id: &str, skin: &str, seed: u64) -> String {
        let r = self
            .post(token, "/sources", json!({ "source_id": source_id, "kind": "synthetic", "skin": skin, "seed": seed, "fps": 30.0 }))
            .await;
        assert_eq!(r.status(), 201, "{}", r.text().await.unwrap());
        let r = self.post(token, "/sessions", json!({ "source_id": source_id })).await;
        assert_eq!(r.status(), 201);
        let v: Value = r.json().await.unwrap();
        v["session_id"].as_str().unwrap().to_string()
    }

    pub async fn stream(&self, token: &str, session: &str) -> Mjpeg {
        let resp = self.get(token, &format!("/stream/{session}")).await;
        assert_eq!(resp.status(), 200);
        let ct = resp.headers()["content-type"].to_str().unwrap().to_string();
        assert!(ct.starts_with("multipart/x-mixed-replace"), "{ct}");
        Mjpeg { resp, buf: Vec::new() }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        for s in self.state.sessions.lock().unwrap().values() {
            s.stop();
        }
    }
}

/// Incremental `multipart/x-mixed-replace` reader.
pub struct Mjpeg {
    resp: reqwest::Response,
    buf: Vec<u8>,
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn parse_part(buf: &[u8]) -> Option<(Vec<u8>, usize)> {
    let head_end = find(buf, b"\r\n\r\n")? + 4;
    let head = std::str::from_utf8(&buf[..head_end]).expect("ascii part header");
    assert!(head.starts_with("--frame\r\n"), "{head:?}");
    let len: usize = head
        .lines()
        .find_map(|l| l.strip_prefix("Content-Length: "))
        .expect("content length")
        .trim()
        .parse()
        .unwrap();
    let end = head_end + len + 2;
    (buf.len() >= end).then(|| (buf[head_end..head_end + len].to_vec(), end))
}

impl Mjpeg {
    pub async fn next_jpeg(&mut self) -> Option<Vec<u8>> {
        loop {
            if let Some((jpeg, used)) = parse_part(&self.buf) {
                self.buf.drain(..used);
                return Some(jpeg);
            }
            match self.resp.chunk().await.ok()? {
                Some(c) => self.buf.extend_from_slice(&c),
                None => return None,
            }
        }
    }

    pub async fn next_frame(&mut self) -> Option<Frame> {
        let jpeg = self.next_jpeg().await?;
        Some(Frame::decode(&jpeg).expect("valid jpeg"))
    }
}

pub fn psnr(a: &Frame, b: &Frame) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let mse = a.pixels.iter().zip(&b.pixels).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>()
        / a.pixels.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Share of pixels of `r` within `tol` (per channel) of `rgb`.
pub fn fraction_near(f: &Frame, r: &rerender_core::Region, rgb: [u8; 3], tol: u8) -> f64 {
    let mut hit = 0usize;
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            let p = f.pixel(x, y);
            if (0..3).all(|c| p[c].abs_diff(rgb[c]) <= tol) {
                hit += 1;
            }
        }
    }
    hit as f64 / r.area() as f64
}
