use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{GameConfig, Outcome, QaRound};
use crate::catalog::ImageSet;
use crate::explain::{ExplanationMode, Setting};

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// Fields left out of replay comparisons.
const TIMESTAMP_FIELDS: &[&str] = &["started_ms", "finished_ms", "timestamp_ms"];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// A finished game, one JSON object per line in log files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameLogRecord {
    pub schema_version: u32,
    pub game_id: String,
    pub worker_id: String,
    /// The worker's explanation group.
    pub group: ExplanationMode,
    /// Session block; block 0 is the no-explanation baseline.
    pub block: u32,
    /// Position among the worker's games, from 0.
    pub play_index: u32,
    pub setting: Setting,
    /// Mode in effect for this game.
    pub explanation_mode: ExplanationMode,
    pub config: GameConfig,
    pub image_set: ImageSet,
    pub secret_id: String,
    pub rounds: Vec<QaRound>,
    pub points_spent: u32,
    pub guess: String,
    pub outcome: Outcome,
    pub final_score: u32,
    pub started_ms: u64,
    pub finished_ms: u64,
}

impl GameLogRecord {
    pub fn won(&self) -> bool {
        self.outcome == Outcome::Won
    }

    /// Explanations were shown in at least one round.
    pub fn used_explanations(&self) -> bool {
        self.rounds.iter().any(|r| r.explanation_shown)
    }

    pub fn helpfulness_ratings(&self) -> Vec<u8> {
        self.rounds.iter().filter_map(|r| r.helpfulness_rating).collect()
    }
}

fn strip_timestamps(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for f in TIMESTAMP_FIELDS {
                map.remove(*f);
            }
            map.values_mut().for_each(strip_timestamps);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}

/// The record serialized with sorted keys and timestamps removed.
pub fn canonical_bytes(record: &GameLogRecord) -> Vec<u8> {
    let mut v = serde_json::to_value(record).expect("log records serialize");
    strip_timestamps(&mut v);
    serde_json::to_vec(&v).expect("values serialize")
}

/// Hex SHA-256 of [`canonical_bytes`].
pub fn replay_digest(record: &GameLogRecord) -> String {
    let digest = Sha256::digest(canonical_bytes(record));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Append records as JSONL. Each line is written with a single `write_all`.
pub fn write_logs<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a GameLogRecord>,
    append: bool,
) -> Result<(), LogError> {
    let path = path.as_ref();
    let io_err = |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io_err)?;
    for r in records {
        let mut line = serde_json::to_vec(r).expect("log records serialize");
        line.push(b'\n');
        file.write_all(&line).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

/// Read a JSONL log file; blank lines are skipped.
pub fn read_logs(path: impl AsRef<Path>) -> Result<Vec<GameLogRecord>, LogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
