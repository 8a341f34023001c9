//! Live sessions and their persistence.
//!
//! Each session owns a directory with `session.json` (mode and full
//! configuration) and `events.jsonl`, an append-only log with one event per
//! line. On start-up every session is rebuilt by replaying the answers in its
//! log; replay recomputes each answer's cost and refuses a log whose recorded
//! costs differ, so a restart never charges an answer twice.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use claimcheck_core::config::Config;
use claimcheck_core::corpus::{generate_synthetic_corpus, load_corpus, Corpus, CorpusError, CorpusProfile};
use claimcheck_core::engine::{Ack, Answer, AnswerError, Event, Mode, Next, Report, Session};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Core(#[from] claimcheck_core::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("unknown corpus profile `{0}`")]
    UnknownProfile(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// The corpus a configuration points at: a directory, or a synthetic profile and seed.
pub fn open_corpus(config: &Config) -> Result<Corpus, StoreError> {
    match &config.corpus.path {
        Some(dir) => Ok(load_corpus(dir)?),
        None => {
            let profile = CorpusProfile::by_name(&config.corpus.profile).ok_or_else(|| StoreError::UnknownProfile(config.corpus.profile.clone()))?;
            Ok(generate_synthetic_corpus(&profile, config.corpus.seed)?)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    id: String,
    mode: Mode,
    config: Config,
}

/// One log line: wall-clock milliseconds plus the engine event.
#[derive(Debug, Serialize, Deserialize)]
pub struct LogRecord {
    pub at_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Summary row of `GET /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub mode: Mode,
    pub claims: usize,
    pub batches: usize,
    pub total_cost: f64,
    pub done: bool,
}

pub struct ApiSession {
    id: String,
    session: Session,
    log: Option<(PathBuf, File)>,
    logged: usize,
}

impl ApiSession {
    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            id: self.id.clone(),
            mode: self.session.mode(),
            claims: self.session.corpus().claims.len(),
            batches: self.session.batches_closed(),
            total_cost: self.session.total_cost(),
            done: self.session.is_done(),
        }
    }

    pub fn next(&mut self, checker: &str) -> Result<Next, StoreError> {
        let next = self.session.next_screen(checker);
        // opening a batch charges reading time, which the log must carry too
        self.flush()?;
        Ok(next)
    }

    /// Applies an answer. The outer error is a storage failure; the answer
    /// itself is then already applied and a resubmission is acknowledged.
    pub fn answer(&mut self, checker: &str, screen_id: &str, answer: Answer) -> Result<Result<Ack, AnswerError>, StoreError> {
        let ack = self.session.answer(checker, screen_id, answer);
        self.flush()?;
        Ok(ack)
    }

    pub fn report(&self) -> Report {
        self.session.report()
    }

    pub fn events(&self) -> &[Event] {
        self.session.events()
    }

    fn flush(&mut self) -> Result<(), StoreError> {
        let events = self.session.events();
        if let Some((path, file)) = &mut self.log {
            if self.logged < events.len() {
                let at_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
                let mut buf = Vec::new();
                for event in &events[self.logged..] {
                    serde_json::to_writer(&mut buf, &LogRecord { at_ms, event: event.clone() })
                        .map_err(|source| StoreError::Json { path: path.clone(), source })?;
                    buf.push(b'\n');
                }
                file.write_all(&buf).and_then(|_| file.flush()).map_err(io_err(path))?;
            }
        }
        self.logged = events.len();
        Ok(())
    }
}

/// All sessions of one server, optionally backed by a state directory.
pub struct Store {
    dir: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<ApiSession>>>>,
    counter: AtomicU64,
}

impl Store {
    pub fn in_memory() -> Self {
        Store { dir: None, sessions: RwLock::new(BTreeMap::new()), counter: AtomicU64::new(0) }
    }

    /// Opens a state directory and replays every session found in it.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let store = Store { dir: Some(dir.to_path_buf()), sessions: RwLock::new(BTreeMap::new()), counter: AtomicU64::new(0) };
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("session.json").is_file())
            .collect();
        entries.sort();
        for path in entries {
            let session = Self::restore(&path)?;
            let n: u64 = session.id.trim_start_matches('s').parse().unwrap_or(0);
            store.counter.fetch_max(n, Ordering::SeqCst);
            store.sessions.write().expect("session map lock").insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(store)
    }

    fn restore(path: &Path) -> Result<ApiSession, StoreError> {
        let meta_path = path.join("session.json");
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|source| StoreError::Json { path: meta_path.clone(), source })?;
        let log_path = path.join("events.jsonl");
        let (events, valid_bytes) = read_log(&log_path)?;
        let corpus = Arc::new(open_corpus(&meta.config)?);
        let session = Session::replay(corpus, meta.config, meta.mode, &events)?;
        if session.events().len() < events.len() || events.iter().zip(session.events()).any(|(a, b)| a != b) {
            let message = format!("{}: log does not replay to the same events", log_path.display());
            return Err(StoreError::Core(claimcheck_core::Error::Checkpoint(message)));
        }
        // drop a torn last line before appending again
        let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
        file.set_len(valid_bytes).map_err(io_err(&log_path))?;
        let mut api = ApiSession { id: meta.id, session, log: Some((log_path, file)), logged: events.len() };
        api.flush()?;
        Ok(api)
    }

    pub fn create(&self, mode: Mode, config: Config) -> Result<(String, Arc<Mutex<ApiSession>>), StoreError> {
        let corpus = Arc::new(open_corpus(&config)?);
        let session = Session::new(corpus, config.clone(), mode)?;
        let id = format!("s{}", self.counter.fetch_add(1, Ordering::SeqCst) + 1);
        let log = match &self.dir {
            Some(dir) => {
                let path = dir.join(&id);
                fs::create_dir_all(&path).map_err(io_err(&path))?;
                let meta_path = path.join("session.json");
                let meta = Meta { id: id.clone(), mode, config };
                let text = serde_json::to_string_pretty(&meta).map_err(|source| StoreError::Json { path: meta_path.clone(), source })?;
                fs::write(&meta_path, text).map_err(io_err(&meta_path))?;
                let log_path = path.join("events.jsonl");
                let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
                Some((log_path, file))
            }
            None => None,
        };
        let handle = Arc::new(Mutex::new(ApiSession { id: id.clone(), session, log, logged: 0 }));
        self.sessions.write().expect("session map lock").insert(id.clone(), handle.clone());
        Ok((id, handle))
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<ApiSession>>> {
        self.sessions.read().expect("session map lock").get(id).cloned()
    }

    pub fn handles(&self) -> Vec<Arc<Mutex<ApiSession>>> {
        self.sessions.read().expect("session map lock").values().cloned().collect()
    }
}

/// Reads an event log and the byte length of its well-formed prefix; a
/// truncated final line (interrupted write) is ignored.
pub fn read_log(path: &Path) -> Result<(Vec<Event>, u64), StoreError> {
    if !path.exists() {
        return Ok((Vec::new(), 0));
    }
    let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut events = Vec::new();
    let mut valid = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            break;
        }
        if !line.trim().is_empty() {
            let record: LogRecord = serde_json::from_str(&line).map_err(|source| StoreError::Json { path: path.to_path_buf(), source })?;
            events.push(record.event);
        }
        valid += n as u64;
    }
    Ok((events, valid))
}
