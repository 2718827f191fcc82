#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use arginote_core::engine::{Clock, Event, ManualClock, SystemClock};
use arginote_core::fixtures::{fixture_challenge, FIXTURE_START_MS};
use arginote_core::{Engine, EvaluatorRegistry, Hub, Limits};
use arginote_server::{app, serve, ServerConfig};
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const CHALLENGE: &str = "reference-2d";

pub fn engine() -> Engine {
    Engine::new(Arc::new(EvaluatorRegistry::with_builtins()), Limits::default())
}

pub struct TestServer {
    pub hub: Arc<Hub>,
    pub http: reqwest::Client,
    pub addr: std::net::SocketAddr,
    stop: Option<oneshot::Sender<()>>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
    }
}

/// In-memory server on an ephemeral port with a frozen clock.
pub async fn start() -> TestServer {
    start_with(Hub::in_memory(engine(), Arc::new(ManualClock::new(FIXTURE_START_MS))), Duration::from_secs(30)).await
}

pub async fn start_live() -> TestServer {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    start_with(Hub::in_memory(engine(), clock), Duration::from_secs(30)).await
}

pub async fn start_with(hub: Hub, heartbeat: Duration) -> TestServer {
    let hub = Arc::new(hub);
    let router = app(hub.clone(), ServerConfig::new([fixture_challenge()]).heartbeat(heartbeat));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = oneshot::channel::<()>();
    tokio::spawn(serve(listener, router, async {
        let _ = stopped.await;
    }));
    TestServer { hub, http: reqwest::Client::new(), addr, stop: Some(stop) }
}

pub struct Reply {
    pub status: u16,
    pub json: Value,
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub async fn post(&self, path: &str, body: Value) -> Reply {
        self.post_raw(path, body.to_string()).await
    }

    pub async fn post_raw(&self, path: &str, body: String) -> Reply {
        let resp = self
            .http
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        Reply { status, json: serde_json::from_str(&text).unwrap_or(Value::Null) }
    }

    pub async fn get(&self, path: &str) -> (u16, Vec<u8>) {
        let resp = self.http.get(self.url(path)).send().await.unwrap();
        (resp.status().as_u16(), resp.bytes().await.unwrap().to_vec())
    }

    /// Session, one team, one member: returns (session, team, member).
    pub async fn seed(&self) -> (String, String, String) {
        let s = self.post("/v1/sessions", json!({ "challenge_id": CHALLENGE })).await;
        assert_eq!(s.status, 201, "{}", s.json);
        let sid = s.json["session_id"].as_str().unwrap().to_owned();
        let t = self.post(&format!("/v1/sessions/{sid}/teams"), json!({ "name": "Team 1" })).await;
        assert_eq!(t.status, 201, "{}", t.json);
        let tid = t.json["team_id"].as_str().unwrap().to_owned();
        let m = self.member(&tid, "ada").await;
        (sid, tid, m)
    }

    pub async fn member(&self, tid: &str, name: &str) -> String {
        let m = self.post(&format!("/v1/teams/{tid}/members"), json!({ "display_name": name })).await;
        assert_eq!(m.status, 201, "{}", m.json);
        m.json["member_id"].as_str().unwrap().to_owned()
    }

    pub async fn submit(&self, tid: &str, body: Value) -> Reply {
        self.post(&format!("/v1/teams/{tid}/papers"), body).await
    }

    pub async fn connect(&self, tid: &str, from_seq: Option<u64>) -> Client {
        let mut url = format!("ws://{}/v1/teams/{tid}/stream", self.addr);
        if let Some(n) = from_seq {
            url.push_str(&format!("?from_seq={n}"));
        }
        let (ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
        Client { ws }
    }
}

pub fn solution(author: &str, title: &str, x: f64, citations: &[&str]) -> Value {
    json!({
        "author": author,
        "title": title,
        "kind": "Solution",
        "argument": "",
        "payload": { "params": [x, 0.0] },
        "citations": citations,
    })
}

pub struct Client {
    pub ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

#[derive(Debug)]
pub enum Frame {
    Json(Value),
    Closed(Option<(CloseCode, String)>),
}

impl Client {
    pub async fn next(&mut self, within: Duration) -> Option<Frame> {
        loop {
            let msg = tokio::time::timeout(within, self.ws.next()).await.ok()?;
            match msg {
                None | Some(Err(_)) => return Some(Frame::Closed(None)),
                Some(Ok(Message::Text(t))) => return Some(Frame::Json(serde_json::from_str(t.as_str()).unwrap())),
                Some(Ok(Message::Close(c))) => {
                    return Some(Frame::Closed(c.map(|c| (c.code, c.reason.to_string()))));
                }
                Some(Ok(_)) => continue,
            }
        }
    }

    /// Next event message, skipping heartbeats.
    pub async fn next_event(&mut self, within: Duration) -> Option<Event> {
        loop {
            match self.next(within).await? {
                Frame::Json(v) if v["type"] == "event" => return Some(to_event(&v)),
                Frame::Json(_) => continue,
                Frame::Closed(_) => return None,
            }
        }
    }

    pub async fn send_text(&mut self, text: &str) {
        self.ws.send(Message::Text(text.into())).await.unwrap();
    }
}

/// Rebuilds the engine event a stream message carries.
pub fn to_event(msg: &Value) -> Event {
    serde_json::from_value(json!({ "seq": msg["seq"], "at": msg["at"], "body": msg["body"] })).unwrap()
}
