use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kernel::Value;
use crate::model::{CodeState, HistoryEntry};

/// Lowercase hex SHA-256 of a commit's canonical content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommitId(String);

impl CommitId {
    pub const LEN: usize = 64;

    pub fn parse(text: &str) -> Option<CommitId> {
        (text.len() == Self::LEN && text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
            .then(|| CommitId(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..12]
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommitKind {
    Auto,
    Manual,
}

/// Everything a commit's id is derived from. Field order is the canonical
/// serialization order; maps are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitContent {
    pub code_parent: Option<CommitId>,
    pub data_parent: Option<CommitId>,
    pub code: CodeState,
    pub history_len: u64,
    pub history_tail: Option<HistoryEntry>,
    pub var_delta: BTreeMap<String, Value>,
    pub var_deleted: BTreeSet<String>,
    pub message: Option<String>,
    pub tag: Option<String>,
    pub branch: String,
    pub kind: CommitKind,
}

impl CommitContent {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("commit content always serializes")
    }

    pub fn digest(&self) -> CommitId {
        CommitId(hex::encode(Sha256::digest(self.canonical_bytes())))
    }

    pub fn parents(&self) -> impl Iterator<Item = &CommitId> {
        let data = self
            .data_parent
            .as_ref()
            .filter(|d| self.code_parent.as_ref() != Some(*d));
        self.code_parent.iter().chain(data)
    }
}

/// A persisted version. `created_at` (unix millis) is metadata only and is
/// not part of the id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub id: CommitId,
    pub created_at: u64,
    pub content: CommitContent,
}

impl Commit {
    pub fn seal(content: CommitContent, created_at: u64) -> Commit {
        Commit {
            id: content.digest(),
            created_at,
            content,
        }
    }
}

impl Deref for Commit {
    type Target = CommitContent;

    fn deref(&self) -> &CommitContent {
        &self.content
    }
}

/// Tag and/or message attached to an existing commit after the fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub commit: CommitId,
    pub tag: Option<String>,
    pub message: Option<String>,
}

/// Live variable name → commit that last changed it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableVersionTable {
    pub entries: BTreeMap<String, CommitId>,
}

impl VariableVersionTable {
    pub fn get(&self, name: &str) -> Option<&CommitId> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The data parent's table updated by one commit's delta.
    pub fn derive(parent: Option<&VariableVersionTable>, commit: &Commit) -> VariableVersionTable {
        let mut entries = parent.map(|t| t.entries.clone()).unwrap_or_default();
        for name in &commit.var_deleted {
            entries.remove(name);
        }
        for name in commit.var_delta.keys() {
            entries.insert(name.clone(), commit.id.clone());
        }
        VariableVersionTable { entries }
    }
}

pub(crate) const KIND_COMMIT: u8 = 1;
pub(crate) const KIND_ANNOTATION: u8 = 2;
/// length (u32 LE) + kind byte
pub(crate) const HEADER_LEN: usize = 5;
pub(crate) const CHECKSUM_LEN: usize = 8;

/// Frames a payload as `len | kind | payload | checksum`.
pub(crate) fn frame(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.push(kind);
    out.extend_from_slice(payload);
    out.extend_from_slice(&checksum(kind, payload));
    out
}

fn checksum(kind: u8, payload: &[u8]) -> [u8; CHECKSUM_LEN] {
    let mut h = Sha256::new();
    h.update([kind]);
    h.update(payload);
    let digest = h.finalize();
    let mut out = [0u8; CHECKSUM_LEN];
    out.copy_from_slice(&digest[..CHECKSUM_LEN]);
    out
}

#[derive(Debug, PartialEq)]
pub(crate) enum Scan<'a> {
    Record { kind: u8, payload: &'a [u8], len: usize },
    /// Not enough bytes for a whole record, or it fails its checksum.
    Invalid { reaches_end: bool },
    End,
}

/// Reads one framed record at the start of `bytes`.
pub(crate) fn scan(bytes: &[u8]) -> Scan<'_> {
    if bytes.is_empty() {
        return Scan::End;
    }
    if bytes.len() < HEADER_LEN {
        return Scan::Invalid { reaches_end: true };
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let total = HEADER_LEN + len + CHECKSUM_LEN;
    if bytes.len() < total {
        return Scan::Invalid { reaches_end: true };
    }
    let kind = bytes[4];
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
    if bytes[HEADER_LEN + len..total] != checksum(kind, payload) {
        return Scan::Invalid {
            reaches_end: total == bytes.len(),
        };
    }
    Scan::Record {
        kind,
        payload,
        len: total,
    }
}
