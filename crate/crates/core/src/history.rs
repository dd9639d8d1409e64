//! Append-only prediction log.
//!
//! One JSON object per line: `{"record": ..., "sha256": ...}` where the hash
//! covers the canonical encoding of the record. Appends go through a single
//! mutex-guarded writer, and each line is written with one `write_all`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bundle::{canonical_json, canonical_sha256};
use crate::error::{Error, Result};
use crate::predict::{PredictRequest, PredictResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrediction {
    /// Position in the log, starting at 1.
    pub sequence: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub bundle_fingerprint: String,
    pub request: PredictRequest,
    pub response: PredictResponse,
}

#[derive(Serialize, Deserialize)]
struct Line {
    record: StoredPrediction,
    sha256: String,
}

/// Reads every record in append order, verifying each checksum.
pub fn replay(path: impl AsRef<Path>) -> Result<Vec<StoredPrediction>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| Error::Malformed {
            row: i + 1,
            column: "record".into(),
            message,
        };
        let parsed: Line = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if canonical_sha256(&parsed.record)? != parsed.sha256 {
            return Err(corrupt("checksum mismatch".into()));
        }
        out.push(parsed.record);
    }
    Ok(out)
}

struct State {
    file: File,
    records: Vec<StoredPrediction>,
}

pub struct HistoryStore {
    path: PathBuf,
    state: Mutex<State>,
}

impl HistoryStore {
    /// Opens or creates the log, loading existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let records = replay(&path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            state: Mutex::new(State { file, records }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(
        &self,
        bundle_fingerprint: &str,
        request: &PredictRequest,
        response: &PredictResponse,
        timestamp_ms: u64,
    ) -> Result<StoredPrediction> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let record = StoredPrediction {
            sequence: state.records.len() as u64 + 1,
            timestamp_ms,
            bundle_fingerprint: bundle_fingerprint.to_string(),
            request: request.clone(),
            response: response.clone(),
        };
        let line = Line {
            sha256: canonical_sha256(&record)?,
            record,
        };
        let mut bytes = canonical_json(&line)?;
        bytes.push(b'\n');
        state.file.write_all(&bytes).map_err(|e| Error::io(&self.path, e))?;
        state.file.flush().map_err(|e| Error::io(&self.path, e))?;
        state.records.push(line.record.clone());
        Ok(line.record)
    }

    /// Newest first, at most `limit` records.
    pub fn list(&self, limit: usize) -> Vec<StoredPrediction> {
        let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        state.records.iter().rev().take(limit).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Current time in milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::ModelBundle;
    use crate::predict::{predict, MissingPolicy};

    fn sample() -> (PredictRequest, PredictResponse) {
        let req = PredictRequest {
            age: Some(50.0),
            ..Default::default()
        };
        let resp = predict(&ModelBundle::fixture(0.9).unwrap(), &req, MissingPolicy::Impute).unwrap();
        (req, resp)
    }

    #[test]
    fn append_list_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let store = HistoryStore::open(&path).unwrap();
        let (req, resp) = sample();
        for t in 0..3 {
            store.append("fp", &req, &resp, 1000 + t).unwrap();
        }
        let listed = store.list(2);
        assert_eq!(listed.iter().map(|r| r.sequence).collect::<Vec<_>>(), [3, 2]);
        let mut replayed = replay(&path).unwrap();
        replayed.reverse();
        assert_eq!(replayed, store.list(10));
        drop(store);
        let reopened = HistoryStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 3);
        assert_eq!(reopened.append("fp", &req, &resp, 5).unwrap().sequence, 4);
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let store = HistoryStore::open(&path).unwrap();
        let (req, resp) = sample();
        store.append("fp", &req, &resp, 1).unwrap();
        drop(store);
        let text = std::fs::read_to_string(&path).unwrap().replace("\"age\":50.0", "\"age\":51.0");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(replay(&path), Err(Error::Malformed { row: 1, .. })));
    }
}
