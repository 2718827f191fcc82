//! `GET /v1/teams/{tid}/stream`: backfill, then live events, on one socket.

use std::collections::HashMap;
use std::sync::Arc;

use arginote_core::canonical;
use arginote_core::engine::Event;
use arginote_core::TeamId;
use axum::extract::ws::{CloseFrame, Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::response::Response;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{ApiError, AppState};

/// Close code for a team id the server does not know.
pub const CLOSE_UNKNOWN_TEAM: u16 = 4404;
/// Close code for a subscriber that fell too far behind the session.
pub const CLOSE_LAGGED: u16 = 4408;
/// Close code for client messages the protocol does not allow.
pub const CLOSE_PROTOCOL: u16 = 1008;

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Outgoing<'a> {
    Event { seq: u64, at: u64, body: &'a arginote_core::engine::EventBody },
    Heartbeat,
    Pong {
        #[serde(skip_serializing_if = "Option::is_none")]
        request_id: Option<String>,
    },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Incoming {
    Ping {
        #[serde(default)]
        request_id: Option<String>,
        #[serde(default)]
        #[allow(dead_code)]
        body: Option<Value>,
    },
}

pub(crate) async fn subscribe(
    State(state): State<AppState>,
    Path(tid): Path<String>,
    Query(query): Query<HashMap<String, String>>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let from_seq = match query.get("from_seq") {
        None => 0,
        Some(raw) => raw
            .parse::<u64>()
            .map_err(|_| ApiError::malformed(format!("from_seq must be a non-negative integer, got {raw:?}")))?,
    };
    let team = TeamId::from(tid.as_str());
    Ok(ws.on_upgrade(move |socket| run(socket, state, team, from_seq)))
}

fn text<T: Serialize>(msg: &T) -> Message {
    Message::Text(canonical::to_canonical_string(msg).expect("stream messages are representable").into())
}

fn event_message(event: &Event) -> Message {
    text(&Outgoing::Event { seq: event.seq, at: event.at, body: &event.body })
}

async fn close(mut socket: WebSocket, code: u16, reason: &'static str) {
    let frame = CloseFrame { code, reason: Utf8Bytes::from_static(reason) };
    let _ = socket.send(Message::Close(Some(frame))).await;
}

async fn run(mut socket: WebSocket, state: AppState, team: TeamId, from_seq: u64) {
    let mut sub = match state.hub.subscribe(&team, from_seq) {
        Ok(sub) => sub,
        Err(_) => return close(socket, CLOSE_UNKNOWN_TEAM, "unknown team").await,
    };
    tracing::debug!(%team, from_seq, backfill = sub.backfill.len(), "subscriber attached");
    for event in std::mem::take(&mut sub.backfill) {
        if socket.send(event_message(&event)).await.is_err() {
            return;
        }
    }
    let mut heartbeat = tokio::time::interval(state.config.heartbeat);
    heartbeat.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    heartbeat.tick().await;
    loop {
        tokio::select! {
            next = sub.live.recv() => {
                let Some(event): Option<Arc<Event>> = next else {
                    let reason = if sub.lagged() { "subscriber lagged" } else { "session closed" };
                    return close(socket, CLOSE_LAGGED, reason).await;
                };
                if socket.send(event_message(&event)).await.is_err() {
                    return;
                }
            }
            _ = heartbeat.tick() => {
                if socket.send(text(&Outgoing::Heartbeat)).await.is_err() {
                    return;
                }
            }
            incoming = socket.recv() => {
                match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                    Some(Ok(Message::Text(t))) => match serde_json::from_str::<Incoming>(t.as_str()) {
                        Ok(Incoming::Ping { request_id, .. }) => {
                            if socket.send(text(&Outgoing::Pong { request_id })).await.is_err() {
                                return;
                            }
                        }
                        Err(_) => return close(socket, CLOSE_PROTOCOL, "protocol violation").await,
                    },
                    Some(Ok(Message::Binary(_))) => return close(socket, CLOSE_PROTOCOL, "protocol violation").await,
                }
            }
        }
    }
}
