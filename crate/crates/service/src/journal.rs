//! Append-only journals of length-prefixed JSON entries.
//!
//! Each entry is a little-endian `u32` byte count followed by that many bytes
//! of JSON. Appends are flushed to disk before they return. A partial entry
//! at the end of a file (a write cut short by a crash) is discarded and the
//! file truncated on open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use escalate_core::inference::{EvidenceEvent, StepInput};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt entry at byte {offset}: {message}")]
    Corrupt { path: String, offset: u64, message: String },
    #[error("{path}: entry {got} out of sequence (expected {expected})")]
    Sequence { path: String, expected: u64, got: u64 },
    #[error("{path}: entry too large to journal")]
    TooLarge { path: String },
}

/// What a journal entry records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EntryBody {
    ModelRegistered { model_id: String, document: String },
    CaseCreated { case_id: String, model_id: String },
    Observation(StepInput),
    Evidence(EvidenceEvent),
    Annotation { t: u64, note: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    /// Server receipt time, milliseconds since the Unix epoch.
    pub received_ms: u64,
    pub entry: EntryBody,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    len: u64,
    next_seq: u64,
}

impl Journal {
    fn io(&self, source: std::io::Error) -> JournalError {
        io_error(&self.path, source)
    }

    /// Opens (creating if needed) the journal at `path` and returns the
    /// intact entries it holds.
    pub fn open(path: &Path) -> Result<(Self, Vec<JournalEntry>), JournalError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| io_error(path, e))?;

        let (entries, good) = decode(path, &bytes)?;
        if good < bytes.len() as u64 {
            tracing::warn!(path = %path.display(), dropped = bytes.len() as u64 - good, "discarding torn journal tail");
            file.set_len(good).map_err(|e| io_error(path, e))?;
            file.sync_all().map_err(|e| io_error(path, e))?;
        }
        file.seek(SeekFrom::End(0)).map_err(|e| io_error(path, e))?;
        let journal = Journal {
            path: path.to_path_buf(),
            file,
            len: good,
            next_seq: entries.len() as u64,
        };
        Ok((journal, entries))
    }

    /// Creates a journal that must not already exist.
    pub fn create(path: &Path) -> Result<Self, JournalError> {
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create_new(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        Ok(Journal {
            path: path.to_path_buf(),
            file,
            len: 0,
            next_seq: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Sequence number the next append will carry.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Writes `body` as the next entry and syncs it to disk. On failure the
    /// file is cut back to its previous length.
    pub fn append(&mut self, body: EntryBody) -> Result<JournalEntry, JournalError> {
        let entry = JournalEntry {
            seq: self.next_seq,
            received_ms: now_ms(),
            entry: body,
        };
        let json = serde_json::to_vec(&entry).expect("journal entries serialise");
        let n = u32::try_from(json.len()).map_err(|_| JournalError::TooLarge {
            path: self.path.display().to_string(),
        })?;
        let mut frame = Vec::with_capacity(4 + json.len());
        frame.extend_from_slice(&n.to_le_bytes());
        frame.extend_from_slice(&json);

        let written = self.file.write_all(&frame).and_then(|()| self.file.sync_data());
        if let Err(e) = written {
            // best effort: leave no partial frame behind for later appends
            let _ = self.file.set_len(self.len);
            return Err(self.io(e));
        }
        self.len += frame.len() as u64;
        self.next_seq += 1;
        Ok(entry)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> JournalError {
    JournalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Decodes complete entries; returns them with the byte length they span.
/// Only the final frame may be incomplete or unreadable.
fn decode(path: &Path, bytes: &[u8]) -> Result<(Vec<JournalEntry>, u64), JournalError> {
    let mut entries = Vec::new();
    let mut at = 0usize;
    while at < bytes.len() {
        let Some(prefix) = bytes.get(at..at + 4) else { break };
        let n = u32::from_le_bytes(prefix.try_into().expect("four bytes")) as usize;
        let Some(body) = bytes.get(at + 4..at + 4 + n) else { break };
        let end = at + 4 + n;
        let entry: JournalEntry = match serde_json::from_slice(body) {
            Ok(e) => e,
            Err(_) if end == bytes.len() => break,
            Err(e) => {
                return Err(JournalError::Corrupt {
                    path: path.display().to_string(),
                    offset: at as u64,
                    message: e.to_string(),
                })
            }
        };
        if entry.seq != entries.len() as u64 {
            return Err(JournalError::Sequence {
                path: path.display().to_string(),
                expected: entries.len() as u64,
                got: entry.seq,
            });
        }
        entries.push(entry);
        at = end;
    }
    Ok((entries, at as u64))
}
