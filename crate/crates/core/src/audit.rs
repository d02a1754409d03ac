//! Append-only, SHA-256 hash-chained event log.
//!
//! Each record stores `digest = SHA-256(prev_digest || seq_be8 || event_type || 0x00 || payload_json)`
//! where `payload_json` is the compact serialization of the payload with
//! object keys in sorted order. The genesis `prev_digest` is all zeroes.
//!
//! On disk the log is JSON lines, one record per line:
//! `{"seq":..,"prev_digest":"..","digest":"..","event_type":"..","payload":{..}}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::identity::{sha256, Hash32};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("audit chain broken at seq {seq}: {reason}")]
    Broken { seq: u64, reason: String },
    #[error("event encoding failed: {0}")]
    Encoding(String),
}

impl AuditError {
    /// Sequence number of the first record that fails verification.
    pub fn broken_seq(&self) -> Option<u64> {
        match self {
            AuditError::Broken { seq, .. } => Some(*seq),
            AuditError::Encoding(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub seq: u64,
    pub prev_digest: Hash32,
    pub digest: Hash32,
    pub event_type: String,
    pub payload: Value,
}

impl AuditRecord {
    pub fn expected_digest(&self) -> Hash32 {
        chain_digest(&self.prev_digest, self.seq, &self.event_type, &self.payload)
    }
}

fn chain_digest(prev: &Hash32, seq: u64, event_type: &str, payload: &Value) -> Hash32 {
    let mut buf = Vec::with_capacity(128);
    buf.extend_from_slice(&prev.0);
    buf.extend_from_slice(&seq.to_be_bytes());
    buf.extend_from_slice(event_type.as_bytes());
    buf.push(0);
    // Value objects are BTreeMap-backed, so keys serialize sorted
    buf.extend_from_slice(&serde_json::to_vec(payload).expect("Value always serializes"));
    sha256(&buf)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<AuditRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Digest of the last record, or zeroes for an empty log.
    pub fn head(&self) -> Hash32 {
        self.records.last().map(|r| r.digest).unwrap_or_default()
    }

    pub fn append(&mut self, event_type: &str, payload: Value) -> &AuditRecord {
        let seq = self.records.len() as u64;
        let prev_digest = self.head();
        let digest = chain_digest(&prev_digest, seq, event_type, &payload);
        self.records.push(AuditRecord {
            seq,
            prev_digest,
            digest,
            event_type: event_type.to_owned(),
            payload,
        });
        self.records.last().expect("just pushed")
    }

    /// Recomputes every digest from genesis.
    pub fn verify(&self) -> Result<(), AuditError> {
        verify_records(&self.records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses and verifies a JSON-lines log.
    ///
    /// Every line must be the canonical serialization of its record, so any
    /// byte-level change that still parses is caught as well.
    /// Like [`AuditLog::parse_jsonl`], but bytes that are not UTF-8 count as
    /// damage to the record they fall in.
    pub fn parse_jsonl_bytes(bytes: &[u8]) -> Result<Self, AuditError> {
        match std::str::from_utf8(bytes) {
            Ok(text) => Self::parse_jsonl(text),
            Err(e) => {
                let seq = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() as u64;
                // earlier records may already be broken; report the first
                let prefix = &bytes[..e.valid_up_to()];
                let whole = prefix.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                let head = std::str::from_utf8(&prefix[..whole]).expect("validated prefix");
                Self::parse_jsonl(head)?;
                Err(AuditError::Broken {
                    seq,
                    reason: "record is not valid UTF-8".into(),
                })
            }
        }
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, AuditError> {
        let mut records = Vec::new();
        let mut rest = text;
        let mut seq = 0u64;
        while !rest.is_empty() {
            let Some(end) = rest.find('\n') else {
                return Err(AuditError::Broken {
                    seq,
                    reason: "missing trailing newline".into(),
                });
            };
            let line = &rest[..end];
            rest = &rest[end + 1..];
            let record: AuditRecord = serde_json::from_str(line).map_err(|e| AuditError::Broken {
                seq,
                reason: format!("unparseable record: {e}"),
            })?;
            let canonical = serde_json::to_string(&record).expect("record serializes");
            if canonical != line {
                return Err(AuditError::Broken {
                    seq,
                    reason: "record is not in canonical form".into(),
                });
            }
            records.push(record);
            seq += 1;
        }
        verify_records(&records)?;
        Ok(Self { records })
    }
}

pub fn verify_records(records: &[AuditRecord]) -> Result<(), AuditError> {
    let mut prev = Hash32::default();
    for (i, r) in records.iter().enumerate() {
        let seq = i as u64;
        let broken = |reason: &str| AuditError::Broken {
            seq,
            reason: reason.to_owned(),
        };
        if r.seq != seq {
            return Err(broken("sequence number out of order"));
        }
        if r.prev_digest != prev {
            return Err(broken("prev_digest does not match predecessor"));
        }
        if r.expected_digest() != r.digest {
            return Err(broken("digest mismatch"));
        }
        prev = r.digest;
    }
    Ok(())
}
