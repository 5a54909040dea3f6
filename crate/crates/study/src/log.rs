//! Append-only event log, one JSON record per line.
//!
//! Every append is flushed to disk with `fsync` before it returns, and
//! callers acknowledge a request only after the append succeeds. A crash can
//! therefore leave at most one partially written final line, which replay
//! drops and trims away before new records are appended.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, StudyError};

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens or creates the log and returns it with every complete record.
    pub fn open<E: DeserializeOwned>(path: &Path) -> Result<(Self, Vec<E>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| StudyError::io(path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(|e| StudyError::io(path, e))?;

        let mut events = Vec::new();
        let mut keep = 0usize;
        let mut offset = 0usize;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            offset += line.len();
            if !line.ends_with('\n') {
                // An unterminated final line is an interrupted write.
                break;
            }
            let body = line.trim_end();
            if !body.is_empty() {
                let event = serde_json::from_str(body).map_err(|e| StudyError::CorruptLog {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                events.push(event);
            }
            keep = offset;
        }
        if keep < text.len() {
            file.set_len(keep as u64).map_err(|e| StudyError::io(path, e))?;
            file.sync_all().map_err(|e| StudyError::io(path, e))?;
        }
        file.seek(SeekFrom::End(0)).map_err(|e| StudyError::io(path, e))?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    /// Appends one record and waits until it is on disk.
    pub fn append<E: Serialize>(&mut self, event: &E) -> Result<()> {
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| StudyError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_tail_is_dropped_and_trimmed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(&path, "1\n2\n{\"half").unwrap();
        let (mut log, events) = EventLog::open::<u32>(&path).unwrap();
        assert_eq!(events, vec![1, 2]);
        log.append(&3u32).unwrap();
        let (_, events) = EventLog::open::<u32>(&path).unwrap();
        assert_eq!(events, vec![1, 2, 3]);
    }

    #[test]
    fn corrupt_middle_record_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(&path, "1\nnope\n3\n").unwrap();
        match EventLog::open::<u32>(&path) {
            Err(StudyError::CorruptLog { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
