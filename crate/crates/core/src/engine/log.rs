//! JSON Lines event log encoding and storage.
//!
//! One event per line, each line the canonical encoding of
//! `{"at":..,"body":{..},"seq":..}` followed by `\n`. Parsing is strict: a
//! line that does not re-encode to exactly the same bytes is corruption.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{replay, CorruptLog, Event, SessionState};
use crate::canonical;

pub fn encode_event(event: &Event) -> String {
    canonical::to_canonical_string(event).expect("events are always representable")
}

pub fn encode_events<'a>(events: impl IntoIterator<Item = &'a Event>) -> Vec<u8> {
    let mut out = Vec::new();
    for event in events {
        out.extend_from_slice(encode_event(event).as_bytes());
        out.push(b'\n');
    }
    out
}

/// Parses a log file, rejecting anything that is not byte-for-byte canonical.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<Event>, CorruptLog> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|e| CorruptLog::at_line(line_of(bytes, e.valid_up_to()), "invalid UTF-8"))?;
    let Some(body) = text.strip_suffix('\n') else {
        return Err(CorruptLog::at_line(text.lines().count(), "truncated final line"));
    };
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 1;
            let event: Event = serde_json::from_str(line)
                .map_err(|e| CorruptLog::at_line(line_no, e.to_string()))?;
            if encode_event(&event) != line {
                return Err(CorruptLog::at_line(line_no, "line is not in canonical form"));
            }
            Ok(event)
        })
        .collect()
}

fn line_of(bytes: &[u8], offset: usize) -> usize {
    bytes[..offset].iter().filter(|b| **b == b'\n').count() + 1
}

pub fn replay_bytes(bytes: &[u8]) -> Result<SessionState, CorruptLog> {
    replay(&parse_log(bytes)?)
}

#[derive(Debug, thiserror::Error)]
#[error("storage failure: {0}")]
pub struct StorageError(pub String);

impl From<std::io::Error> for StorageError {
    fn from(err: std::io::Error) -> Self {
        StorageError(err.to_string())
    }
}

/// Durable append-only sink for encoded log lines.
pub trait LogStore: Send {
    /// Appends whole lines. Either every byte is durable on return or none is.
    fn append(&mut self, lines: &[u8]) -> Result<(), StorageError>;
}

#[derive(Debug, Default)]
pub struct MemoryLogStore {
    bytes: Vec<u8>,
}

impl MemoryLogStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

impl LogStore for MemoryLogStore {
    fn append(&mut self, lines: &[u8]) -> Result<(), StorageError> {
        self.bytes.extend_from_slice(lines);
        Ok(())
    }
}

/// A log file that is flushed to disk on every append.
#[derive(Debug)]
pub struct FileLogStore {
    path: PathBuf,
    file: Option<File>,
    len: u64,
}

impl FileLogStore {
    /// Opens (or lazily creates) the log at `path`, continuing after existing content.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        let len = match std::fs::metadata(&path) {
            Ok(meta) => meta.len(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e.into()),
        };
        Ok(Self { path, file: None, len })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn handle(&mut self) -> Result<&mut File, StorageError> {
        if self.file.is_none() {
            let file = OpenOptions::new().create(true).append(true).open(&self.path)?;
            self.file = Some(file);
        }
        Ok(self.file.as_mut().expect("just opened"))
    }
}

impl LogStore for FileLogStore {
    fn append(&mut self, lines: &[u8]) -> Result<(), StorageError> {
        let previous = self.len;
        let file = self.handle()?;
        let result = file.write_all(lines).and_then(|()| file.sync_data());
        match result {
            Ok(()) => {
                self.len = previous + lines.len() as u64;
                Ok(())
            }
            Err(err) => {
                // Roll back a partially written batch.
                let _ = file.set_len(previous);
                self.file = None;
                Err(err.into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EventBody;
    use crate::evaluator::Challenge;
    use crate::ids::{SessionId, TeamId};

    fn sample() -> Vec<Event> {
        vec![
            Event {
                seq: 1,
                at: 1_000,
                body: EventBody::SessionCreated {
                    session_id: SessionId::from("s1"),
                    challenge: Challenge::gaussian("demo", &[0.0, 0.0]),
                },
            },
            Event {
                seq: 2,
                at: 2_000,
                body: EventBody::TeamCreated { team_id: TeamId::from("s1-t2"), name: "Team 1".into() },
            },
        ]
    }

    #[test]
    fn lines_are_canonical() {
        let bytes = encode_events(&sample());
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(
            text,
            concat!(
                r#"{"at":1000,"body":{"challenge":{"id":"demo","kind":"gaussian-proximity","params":{"dimension":2,"target":[0.0,0.0]}},"session_id":"s1","type":"session_created"},"seq":1}"#,
                "\n",
                r#"{"at":2000,"body":{"name":"Team 1","team_id":"s1-t2","type":"team_created"},"seq":2}"#,
                "\n"
            )
        );
        assert_eq!(parse_log(&bytes).unwrap(), sample());
    }

    #[test]
    fn rejects_non_canonical_and_truncated_input() {
        let good = encode_events(&sample());
        assert!(parse_log(&good[..good.len() - 1]).is_err());

        let spaced = String::from_utf8(good.clone()).unwrap().replacen(r#""at":1000"#, r#""at": 1000"#, 1);
        let err = parse_log(spaced.as_bytes()).unwrap_err();
        assert_eq!(err.location, "line 1");

        let mut blank = good.clone();
        blank.push(b'\n');
        assert!(parse_log(&blank).is_err());

        assert!(parse_log(&[0xff, b'\n']).is_err());
        assert_eq!(parse_log(b"").unwrap(), vec![]);
    }

    #[test]
    fn file_store_appends_durably() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.jsonl");
        let bytes = encode_events(&sample());
        {
            let mut store = FileLogStore::open(&path).unwrap();
            store.append(&bytes[..]).unwrap();
        }
        let mut store = FileLogStore::open(&path).unwrap();
        store.append(b"").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        assert_eq!(replay_bytes(&bytes).unwrap().last_seq(), 2);
    }

    #[test]
    fn file_store_reports_failures() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = FileLogStore::open(dir.path().join("missing").join("s1.jsonl")).unwrap();
        assert!(store.append(b"{}\n").is_err());
    }
}
