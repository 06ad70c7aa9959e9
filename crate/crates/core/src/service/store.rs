use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::engine::{GameLogRecord, GameSession, PlanRegistry, SessionView};
use crate::explain::ExplanationMode;

/// Append-only JSONL sink. Each record is one `write_all` of a full line
/// under a lock, so concurrent appends never interleave.
pub struct LogSink {
    path: Option<PathBuf>,
    file: Mutex<Option<File>>,
    memory: Mutex<Vec<GameLogRecord>>,
}

impl LogSink {
    /// Records are kept in memory and, when `path` is given, appended there.
    pub fn new(path: Option<&Path>) -> std::io::Result<Self> {
        let file = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Some(OpenOptions::new().create(true).append(true).open(p)?)
            }
            None => None,
        };
        Ok(LogSink {
            path: path.map(Path::to_path_buf),
            file: Mutex::new(file),
            memory: Mutex::new(Vec::new()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, record: &GameLogRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(std::io::Error::other)?;
        line.push(b'\n');
        let mut file = self.file.lock().expect("log sink lock");
        if let Some(f) = file.as_mut() {
            f.write_all(&line)?;
            f.flush()?;
        }
        self.memory.lock().expect("log sink lock").push(record.clone());
        Ok(())
    }

    pub fn records(&self) -> Vec<GameLogRecord> {
        self.memory.lock().expect("log sink lock").clone()
    }
}

/// A game in progress and the log metadata it will be written with.
pub struct ActiveGame {
    pub session: GameSession,
    pub worker_id: String,
    pub group: ExplanationMode,
    pub block: u32,
    pub play_index: u32,
}

#[derive(Default)]
pub struct WorkerState {
    pub games_started: u32,
    pub active: Option<String>,
}

/// Cached reply to a request carrying a client token.
#[derive(Clone)]
pub struct CachedReply {
    pub status: u16,
    pub body: serde_json::Value,
}

/// Sessions, worker plans and idempotency cache. Each active session has its
/// own lock so commands on one session are serialized while distinct
/// sessions proceed in parallel.
#[derive(Default)]
pub struct SessionStore {
    pub active: HashMap<String, Arc<Mutex<ActiveGame>>>,
    pub finished: HashMap<String, SessionView>,
    pub workers: HashMap<String, WorkerState>,
    pub plans: PlanRegistry,
    pub replies: HashMap<(String, String), CachedReply>,
    pub games_created: u64,
    pub workers_registered: u64,
}
