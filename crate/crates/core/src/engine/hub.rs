//! Multi-session host: serializes commands per session, persists events
//! before publishing them, and fans them out to live subscribers.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use tokio::sync::mpsc;

use super::log::{encode_events, parse_log, FileLogStore, LogStore, MemoryLogStore, StorageError};
use super::{state_digest, Command, CorruptLog, Engine, Event, EventBody, Rejection, SessionState};
use crate::evaluator::Challenge;
use crate::ids::{SessionId, TeamId};

pub const DEFAULT_SUBSCRIBER_CAPACITY: usize = 1024;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis() as u64
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Where session logs live.
pub trait StoreFactory: Send + Sync {
    fn create(&self, session: &SessionId) -> Result<Box<dyn LogStore>, StorageError>;

    /// Existing logs to load on startup.
    fn existing(&self) -> Result<Vec<(SessionId, Vec<u8>)>, StorageError> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MemoryStores;

impl StoreFactory for MemoryStores {
    fn create(&self, _session: &SessionId) -> Result<Box<dyn LogStore>, StorageError> {
        Ok(Box::new(MemoryLogStore::new()))
    }
}

/// One `<session>.jsonl` file per session in a directory.
#[derive(Debug, Clone)]
pub struct DirectoryStores {
    dir: PathBuf,
}

impl DirectoryStores {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self, StorageError> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    pub fn path_for(&self, session: &SessionId) -> PathBuf {
        self.dir.join(format!("{session}.jsonl"))
    }
}

impl StoreFactory for DirectoryStores {
    fn create(&self, session: &SessionId) -> Result<Box<dyn LogStore>, StorageError> {
        Ok(Box::new(FileLogStore::open(self.path_for(session))?))
    }

    fn existing(&self) -> Result<Vec<(SessionId, Vec<u8>)>, StorageError> {
        let mut found = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    found.push((SessionId::from(stem), std::fs::read(&path)?));
                }
            }
        }
        found.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(found)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HubError {
    #[error("{0}")]
    Rejected(#[from] Rejection),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("session {session}: {source}")]
    Corrupt { session: SessionId, source: CorruptLog },
}

/// A live event feed: history after `from_seq`, then everything appended later.
#[derive(Debug)]
pub struct Subscription {
    pub session: SessionId,
    pub backfill: Vec<Arc<Event>>,
    pub live: mpsc::Receiver<Arc<Event>>,
    lagged: Arc<AtomicBool>,
}

impl Subscription {
    /// True once the hub dropped this subscriber for falling too far behind.
    pub fn lagged(&self) -> bool {
        self.lagged.load(Ordering::SeqCst)
    }
}

struct Subscriber {
    tx: mpsc::Sender<Arc<Event>>,
    lagged: Arc<AtomicBool>,
}

struct SessionSlot {
    state: SessionState,
    events: Vec<Arc<Event>>,
    bytes: Vec<u8>,
    store: Box<dyn LogStore>,
    subscribers: Vec<Subscriber>,
}

impl SessionSlot {
    /// Decide, persist, fold, publish. Nothing is visible unless the append succeeded.
    fn execute(&mut self, engine: &Engine, cmd: &Command, now: u64) -> Result<Vec<Arc<Event>>, HubError> {
        let events = engine.decide(&self.state, cmd, now)?;
        let encoded = encode_events(&events);
        self.store.append(&encoded)?;
        let mut next = self.state.clone();
        for event in &events {
            next.apply(event).expect("decided events always apply");
        }
        self.state = next;
        self.bytes.extend_from_slice(&encoded);
        let events: Vec<Arc<Event>> = events.into_iter().map(Arc::new).collect();
        self.events.extend(events.iter().cloned());
        self.publish(&events);
        Ok(events)
    }

    fn publish(&mut self, events: &[Arc<Event>]) {
        self.subscribers.retain(|sub| {
            for event in events {
                match sub.tx.try_send(event.clone()) {
                    Ok(()) => {}
                    Err(mpsc::error::TrySendError::Full(_)) => {
                        sub.lagged.store(true, Ordering::SeqCst);
                        tracing::warn!(seq = event.seq, "dropping slow subscriber");
                        return false;
                    }
                    Err(mpsc::error::TrySendError::Closed(_)) => return false,
                }
            }
            true
        });
    }
}

/// Hosts every session of one store.
pub struct Hub {
    engine: Engine,
    clock: Arc<dyn Clock>,
    stores: Box<dyn StoreFactory>,
    sessions: RwLock<BTreeMap<SessionId, Arc<Mutex<SessionSlot>>>>,
    teams: RwLock<HashMap<TeamId, SessionId>>,
    next_session: Mutex<u64>,
    subscriber_capacity: usize,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub")
            .field("sessions", &self.sessions.read().expect("lock").len())
            .finish_non_exhaustive()
    }
}

impl Hub {
    /// Creates a hub and loads every existing log from `stores`.
    pub fn open(engine: Engine, clock: Arc<dyn Clock>, stores: Box<dyn StoreFactory>) -> Result<Self, HubError> {
        let hub = Self {
            engine,
            clock,
            stores,
            sessions: RwLock::new(BTreeMap::new()),
            teams: RwLock::new(HashMap::new()),
            next_session: Mutex::new(1),
            subscriber_capacity: DEFAULT_SUBSCRIBER_CAPACITY,
        };
        for (session, bytes) in hub.stores.existing()? {
            hub.load(session, bytes)?;
        }
        Ok(hub)
    }

    /// An in-memory hub.
    pub fn in_memory(engine: Engine, clock: Arc<dyn Clock>) -> Self {
        Self::open(engine, clock, Box::new(MemoryStores)).expect("memory stores hold no logs")
    }

    pub fn with_subscriber_capacity(mut self, capacity: usize) -> Self {
        self.subscriber_capacity = capacity.max(1);
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn load(&self, session: SessionId, bytes: Vec<u8>) -> Result<(), HubError> {
        let corrupt = |source| HubError::Corrupt { session: session.clone(), source };
        let events = parse_log(&bytes).map_err(corrupt)?;
        let mut state = SessionState::reserve(session.clone());
        for event in &events {
            state.apply(event).map_err(corrupt)?;
        }
        let store = self.stores.create(&session)?;
        {
            let mut teams = self.teams.write().expect("lock");
            for team in state.teams() {
                teams.insert(team.id.clone(), session.clone());
            }
        }
        if let Some(n) = session.as_str().strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
            let mut next = self.next_session.lock().expect("lock");
            *next = (*next).max(n + 1);
        }
        let slot = SessionSlot {
            state,
            events: events.into_iter().map(Arc::new).collect(),
            bytes,
            store,
            subscribers: Vec::new(),
        };
        self.sessions.write().expect("lock").insert(session, Arc::new(Mutex::new(slot)));
        Ok(())
    }

    fn slot(&self, session: &SessionId) -> Option<Arc<Mutex<SessionSlot>>> {
        self.sessions.read().expect("lock").get(session).cloned()
    }

    pub fn session_of(&self, team: &TeamId) -> Option<SessionId> {
        self.teams.read().expect("lock").get(team).cloned()
    }

    pub fn sessions(&self) -> Vec<SessionId> {
        self.sessions.read().expect("lock").keys().cloned().collect()
    }

    /// Allocates a fresh session id and creates the session.
    pub fn create_session(&self, challenge: Challenge) -> Result<(SessionId, Vec<Arc<Event>>), HubError> {
        let mut next = self.next_session.lock().expect("lock");
        let session = SessionId::new(format!("s{}", *next));
        let mut slot = SessionSlot {
            state: SessionState::reserve(session.clone()),
            events: Vec::new(),
            bytes: Vec::new(),
            store: self.stores.create(&session)?,
            subscribers: Vec::new(),
        };
        let events = slot.execute(&self.engine, &Command::CreateSession { challenge }, self.clock.now_ms())?;
        *next += 1;
        self.sessions
            .write()
            .expect("lock")
            .insert(session.clone(), Arc::new(Mutex::new(slot)));
        Ok((session, events))
    }

    /// Runs a command against the session it addresses.
    pub fn execute(&self, cmd: Command) -> Result<Vec<Arc<Event>>, HubError> {
        let session = match &cmd {
            Command::CreateSession { .. } => {
                return self.create_session_from(cmd);
            }
            Command::CreateTeam { session, .. } => session.clone(),
            Command::JoinTeam { team, .. } | Command::SubmitPaper { team, .. } => self
                .session_of(team)
                .ok_or_else(|| Rejection::UnknownTeam(team.clone()))?,
        };
        let slot = self.slot(&session).ok_or_else(|| Rejection::UnknownSession(session.clone()))?;
        let mut slot = slot.lock().expect("session lock poisoned");
        let events = slot.execute(&self.engine, &cmd, self.clock.now_ms())?;
        drop(slot);
        for event in &events {
            if let EventBody::TeamCreated { team_id, .. } = &event.body {
                self.teams.write().expect("lock").insert(team_id.clone(), session.clone());
            }
        }
        Ok(events)
    }

    fn create_session_from(&self, cmd: Command) -> Result<Vec<Arc<Event>>, HubError> {
        let Command::CreateSession { challenge } = cmd else { unreachable!() };
        self.create_session(challenge).map(|(_, events)| events)
    }

    /// Subscribes to the session owning `team`, starting after `from_seq`.
    pub fn subscribe(&self, team: &TeamId, from_seq: u64) -> Result<Subscription, HubError> {
        let session = self.session_of(team).ok_or_else(|| Rejection::UnknownTeam(team.clone()))?;
        let slot = self.slot(&session).ok_or_else(|| Rejection::UnknownSession(session.clone()))?;
        let mut slot = slot.lock().expect("session lock poisoned");
        let start = (from_seq as usize).min(slot.events.len());
        let backfill = slot.events[start..].to_vec();
        let (tx, live) = mpsc::channel(self.subscriber_capacity);
        let lagged = Arc::new(AtomicBool::new(false));
        slot.subscribers.push(Subscriber { tx, lagged: lagged.clone() });
        Ok(Subscription { session, backfill, live, lagged })
    }

    /// Runs `f` against the current state of `session`.
    pub fn with_state<R>(&self, session: &SessionId, f: impl FnOnce(&SessionState) -> R) -> Option<R> {
        let slot = self.slot(session)?;
        let slot = slot.lock().expect("session lock poisoned");
        Some(f(&slot.state))
    }

    pub fn snapshot(&self, session: &SessionId) -> Option<SessionState> {
        self.with_state(session, Clone::clone)
    }

    pub fn events(&self, session: &SessionId) -> Option<Vec<Arc<Event>>> {
        let slot = self.slot(session)?;
        let slot = slot.lock().expect("session lock poisoned");
        Some(slot.events.clone())
    }

    /// The session's log exactly as persisted.
    pub fn export(&self, session: &SessionId) -> Option<Vec<u8>> {
        let slot = self.slot(session)?;
        let slot = slot.lock().expect("session lock poisoned");
        Some(slot.bytes.clone())
    }

    pub fn digest(&self, session: &SessionId) -> Option<String> {
        self.with_state(session, state_digest)
    }

    pub fn subscriber_count(&self, session: &SessionId) -> usize {
        self.slot(session)
            .map(|slot| {
                let mut slot = slot.lock().expect("session lock poisoned");
                slot.subscribers.retain(|s| !s.tx.is_closed());
                slot.subscribers.len()
            })
            .unwrap_or(0)
    }
}
