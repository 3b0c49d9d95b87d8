//! Append-only decision log (`decisions.jsonl`) with an occasional state
//! snapshot (`snapshot.json`).
//!
//! Every entry is one JSON line written with a single `write_all` and
//! synced before the call returns. A crash can therefore only leave an
//! unterminated final line, which [`DecisionLog::open`] drops. A
//! newline-terminated line that does not parse is corruption and fails the
//! open.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{Event, LogEntry, ReviewState, StateError};

pub const LOG_FILE: &str = "decisions.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    state: ReviewState,
}

/// Result of replaying raw log bytes.
#[derive(Debug)]
pub struct Replay {
    pub state: ReviewState,
    /// Length of the well-formed prefix.
    pub valid_len: usize,
    pub entries: usize,
}

/// Folds every complete line of `bytes` into `base`, skipping entries at
/// or below `base.seq`.
pub fn replay(bytes: &[u8], base: ReviewState) -> Result<Replay, LogError> {
    let mut state = base;
    let mut offset = 0;
    let mut entries = 0;
    let mut line_no = 0;
    while let Some(nl) = bytes[offset..].iter().position(|b| *b == b'\n') {
        line_no += 1;
        let line = &bytes[offset..offset + nl];
        let entry: LogEntry = serde_json::from_slice(line).map_err(|e| LogError::Corrupt {
            line: line_no,
            message: e.to_string(),
        })?;
        if entry.seq > state.seq {
            state.apply(&entry).map_err(|e| LogError::Corrupt {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        entries += 1;
        offset += nl + 1;
    }
    Ok(Replay {
        state,
        valid_len: offset,
        entries,
    })
}

#[derive(Debug)]
pub struct DecisionLog {
    dir: PathBuf,
    file: File,
    last_seq: u64,
    since_snapshot: u64,
    snapshot_every: u64,
}

impl DecisionLog {
    /// Opens (or creates) the log in `dir` and rebuilds the state. A torn
    /// final line is cut off the file. The snapshot is used only when the
    /// log reaches its sequence number and is removed otherwise.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<(DecisionLog, ReviewState), LogError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let full = replay(&bytes, ReviewState::default())?;
        let state = match read_snapshot(dir)? {
            Some(snap) if snap.seq <= full.state.seq => {
                let from_snapshot = replay(&bytes[..full.valid_len], snap.state)?;
                from_snapshot.state
            }
            Some(_) => {
                // ahead of the log: later appends would reuse its sequence numbers
                fs::remove_file(dir.join(SNAPSHOT_FILE))?;
                full.state
            }
            None => full.state,
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if full.valid_len < bytes.len() {
            file.set_len(full.valid_len as u64)?;
            file.sync_data()?;
        }
        Ok((
            DecisionLog {
                dir: dir.to_path_buf(),
                file,
                last_seq: state.seq,
                since_snapshot: 0,
                snapshot_every: snapshot_every.max(1),
            },
            state,
        ))
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Validates `event` against `state`, writes it and applies it.
    pub fn append(&mut self, state: &mut ReviewState, event: Event) -> Result<LogEntry, LogError> {
        let entry = LogEntry {
            seq: self.last_seq + 1,
            event,
        };
        state.check(&entry)?;
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.last_seq = entry.seq;
        state.apply(&entry)?;
        self.since_snapshot += 1;
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot(state)?;
        }
        Ok(entry)
    }

    /// Writes the snapshot through a temporary file and a rename.
    pub fn snapshot(&mut self, state: &ReviewState) -> Result<(), LogError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(&mut f, &Snapshot { seq: state.seq, state: state.clone() })?;
        f.sync_all()?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        self.since_snapshot = 0;
        Ok(())
    }
}

fn read_snapshot(dir: &Path) -> Result<Option<Snapshot>, LogError> {
    match fs::read(dir.join(SNAPSHOT_FILE)) {
        Ok(b) => Ok(serde_json::from_slice(&b).ok()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
