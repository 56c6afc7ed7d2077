//! Append-only log of encrypted records, held on the untrusted side.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::SystemTime;

use duet_enclave::{Envelope, MalformedEnvelope};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Malformed(#[from] MalformedEnvelope),
    #[error("record file line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub envelope: Envelope,
    pub inserted_at: SystemTime,
}

/// A point-in-time copy of the log. Later appends do not show up here.
pub type Snapshot = Arc<[Arc<Record>]>;

#[derive(Debug, Default)]
pub struct RecordLog {
    records: RwLock<Vec<Arc<Record>>>,
    file: Option<Mutex<File>>,
}

impl RecordLog {
    pub fn in_memory() -> Self {
        RecordLog::default()
    }

    /// Loads an existing record file, if any, and appends to it from now on.
    /// Loaded records keep their order but carry the load time.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut records = Vec::new();
        if path.exists() {
            let now = SystemTime::now();
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |reason: String| StoreError::Corrupt { line: i + 1, reason };
                let value = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                let envelope = Envelope::from_json(value).map_err(|e| corrupt(e.to_string()))?;
                records.push(Arc::new(Record {
                    envelope,
                    inserted_at: now,
                }));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordLog {
            records: RwLock::new(records),
            file: Some(Mutex::new(file)),
        })
    }

    /// Returns the index of the new record.
    pub fn append(&self, envelope: Envelope) -> Result<usize, StoreError> {
        envelope.check_structure()?;
        let mut records = self.records.write().expect("record log lock");
        if let Some(file) = &self.file {
            let mut line = serde_json::to_vec(&envelope).expect("envelopes serialize");
            line.push(b'\n');
            let mut f = file.lock().expect("record file lock");
            f.write_all(&line)?;
            f.flush()?;
        }
        records.push(Arc::new(Record {
            envelope,
            inserted_at: SystemTime::now(),
        }));
        Ok(records.len() - 1)
    }

    pub fn append_json(&self, value: serde_json::Value) -> Result<usize, StoreError> {
        self.append(Envelope::from_json(value)?)
    }

    pub fn snapshot(&self) -> Snapshot {
        self.records.read().expect("record log lock").as_slice().into()
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("record log lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
