//! Append-only commit storage with incremental variable deltas.
//!
//! On disk a store is a directory:
//!
//! ```text
//! log.bin    framed records: u32 LE payload length, kind byte, JSON payload,
//!            first 8 bytes of SHA-256(kind || payload)
//! index      one line per record: "<offset> <c|a> <commit id>" (rebuildable)
//! HEAD       two lines: head-code commit id, head-data commit id
//! branches   "<name> <commit id>" lines, sorted by name
//! notebook   the working notebook as a JSON cell array
//! .lock      advisory lock held by the single writer
//! ```
//!
//! A torn record at the end of the log is truncated when a writer opens the
//! store; read-only openers simply ignore it. Everything else is kept in
//! memory once loaded, including each commit's variable version table.

mod record;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kernel::Environment;
use crate::model::{CodeState, HistoryEntry};

pub use record::{
    Annotation, Commit, CommitContent, CommitId, CommitKind, VariableVersionTable,
};
use record::{frame, scan, Scan, KIND_ANNOTATION, KIND_COMMIT};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("parent commit {0} is not in the store")]
    MissingParent(CommitId),
    #[error("unknown commit {0}")]
    UnknownCommit(String),
    #[error("commit prefix {0} is ambiguous")]
    AmbiguousCommit(String),
    #[error("commit {commit} does not hold a value for variable {name}")]
    CorruptDelta { commit: CommitId, name: String },
    #[error("invalid commit: {0}")]
    InvalidCommit(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("{0} is not a store (missing log.bin)")]
    NotAStore(PathBuf),
    #[error("{0} already contains a store")]
    AlreadyExists(PathBuf),
    #[error("store {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("store was opened read-only")]
    ReadOnly,
    #[error("storage I/O: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// The commits the live session's code and data correspond to.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Head {
    pub code: CommitId,
    pub data: CommitId,
}

impl Head {
    pub fn unified(id: CommitId) -> Head {
        Head {
            code: id.clone(),
            data: id,
        }
    }

    pub fn is_split(&self) -> bool {
        self.code != self.data
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    /// fsync after every append and metadata write.
    pub sync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { sync: true }
    }
}

struct Disk {
    dir: PathBuf,
    log: Option<File>,
    index: Option<File>,
    _lock: Option<File>,
    log_len: u64,
    sync: bool,
}

pub struct Store {
    disk: Option<Disk>,
    commits: HashMap<CommitId, Commit>,
    order: Vec<CommitId>,
    offsets: HashMap<CommitId, u64>,
    tables: HashMap<CommitId, VariableVersionTable>,
    annotations: HashMap<CommitId, Annotation>,
    children: HashMap<CommitId, Vec<CommitId>>,
    branches: BTreeMap<String, CommitId>,
    head: Option<Head>,
    /// Working notebook of an in-memory store.
    notebook: Option<CodeState>,
}

const LOG: &str = "log.bin";
const INDEX: &str = "index";
const HEAD: &str = "HEAD";
const BRANCHES: &str = "branches";
const NOTEBOOK: &str = "notebook";
const LOCK: &str = ".lock";

impl Store {
    pub fn in_memory() -> Store {
        Store {
            disk: None,
            commits: HashMap::new(),
            order: Vec::new(),
            offsets: HashMap::new(),
            tables: HashMap::new(),
            annotations: HashMap::new(),
            children: HashMap::new(),
            branches: BTreeMap::new(),
            head: None,
            notebook: None,
        }
    }

    /// An in-memory copy of this store's current contents.
    pub fn to_memory(&self) -> Store {
        Store {
            disk: None,
            commits: self.commits.clone(),
            order: self.order.clone(),
            offsets: self.offsets.clone(),
            tables: self.tables.clone(),
            annotations: self.annotations.clone(),
            children: self.children.clone(),
            branches: self.branches.clone(),
            head: self.head.clone(),
            notebook: self.notebook.clone(),
        }
    }

    /// Creates an empty store directory and opens it for writing.
    pub fn init(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Store> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        if dir.join(LOG).exists() {
            return Err(StoreError::AlreadyExists(dir.to_path_buf()));
        }
        File::create(dir.join(LOG))?;
        File::create(dir.join(INDEX))?;
        Store::open(dir, options)
    }

    /// Opens an existing store as its single writer.
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Store> {
        Store::load(dir.as_ref(), Some(options))
    }

    /// Opens without locking; never modifies files.
    pub fn open_read_only(dir: impl AsRef<Path>) -> Result<Store> {
        Store::load(dir.as_ref(), None)
    }

    fn load(dir: &Path, writer: Option<StoreOptions>) -> Result<Store> {
        let log_path = dir.join(LOG);
        if !log_path.exists() {
            return Err(StoreError::NotAStore(dir.to_path_buf()));
        }
        let lock = match writer {
            Some(_) => {
                let f = OpenOptions::new()
                    .create(true)
                    .truncate(false)
                    .write(true)
                    .open(dir.join(LOCK))?;
                if f.try_lock().is_err() {
                    return Err(StoreError::Locked(dir.to_path_buf()));
                }
                Some(f)
            }
            None => None,
        };

        let bytes = fs::read(&log_path)?;
        let mut store = Store::in_memory();
        let mut index_text = String::new();
        let mut offset = 0usize;
        loop {
            match scan(&bytes[offset..]) {
                Scan::End => break,
                Scan::Invalid { reaches_end: true } => break,
                Scan::Invalid { reaches_end: false } => {
                    return Err(StoreError::Corrupt(format!("bad record at offset {offset}")))
                }
                Scan::Record { kind, payload, len } => {
                    let (tag, id) = store.apply_record(kind, payload, offset as u64)?;
                    index_text.push_str(&format!("{offset} {tag} {id}\n"));
                    offset += len;
                }
            }
        }
        let valid_len = offset as u64;

        let mut disk = Disk {
            dir: dir.to_path_buf(),
            log: None,
            index: None,
            _lock: lock,
            log_len: valid_len,
            sync: writer.map(|o| o.sync).unwrap_or(false),
        };
        if writer.is_some() {
            let log = OpenOptions::new().append(true).open(&log_path)?;
            if valid_len < bytes.len() as u64 {
                log.set_len(valid_len)?;
                log.sync_all()?;
            }
            let index_path = dir.join(INDEX);
            if fs::read_to_string(&index_path).ok().as_deref() != Some(index_text.as_str()) {
                write_atomic(&index_path, index_text.as_bytes(), disk.sync)?;
            }
            disk.log = Some(log);
            disk.index = Some(OpenOptions::new().append(true).open(&index_path)?);
        }

        store.branches = read_branches(&dir.join(BRANCHES), &store.commits)?;
        store.head = read_head(&dir.join(HEAD), &store.commits)?;
        store.disk = Some(disk);
        Ok(store)
    }

    /// Applies one decoded log record; returns its index tag and commit id.
    fn apply_record(&mut self, kind: u8, payload: &[u8], offset: u64) -> Result<(char, CommitId)> {
        let corrupt = |e: serde_json::Error| StoreError::Corrupt(format!("record at {offset}: {e}"));
        match kind {
            KIND_COMMIT => {
                let commit: Commit = serde_json::from_slice(payload).map_err(corrupt)?;
                if commit.content.digest() != commit.id {
                    return Err(StoreError::Corrupt(format!(
                        "record at {offset}: id does not match content"
                    )));
                }
                let id = commit.id.clone();
                self.insert(commit, offset)?;
                Ok(('c', id))
            }
            KIND_ANNOTATION => {
                let a: Annotation = serde_json::from_slice(payload).map_err(corrupt)?;
                if !self.commits.contains_key(&a.commit) {
                    return Err(StoreError::Corrupt(format!(
                        "annotation at {offset} names unknown commit {}",
                        a.commit
                    )));
                }
                let id = a.commit.clone();
                self.merge_annotation(a);
                Ok(('a', id))
            }
            other => Err(StoreError::Corrupt(format!("unknown record kind {other} at {offset}"))),
        }
    }

    fn validate(&self, content: &CommitContent) -> Result<()> {
        for parent in content.code_parent.iter().chain(&content.data_parent) {
            if !self.commits.contains_key(parent) {
                return Err(StoreError::MissingParent(parent.clone()));
            }
        }
        if content.code_parent.is_some() != content.data_parent.is_some() {
            return Err(StoreError::InvalidCommit(
                "a commit has both parents or neither".into(),
            ));
        }
        if let Some(name) = content.var_delta.keys().find(|n| content.var_deleted.contains(*n)) {
            return Err(StoreError::InvalidCommit(format!(
                "{name} is both changed and deleted"
            )));
        }
        let (parent_len, parent_table) = match &content.data_parent {
            Some(p) => (self.commits[p].history_len, self.tables.get(p)),
            None => (0, None),
        };
        let expected_len = parent_len + content.history_tail.is_some() as u64;
        if content.history_len != expected_len {
            return Err(StoreError::InvalidCommit(format!(
                "history_len {} should be {expected_len}",
                content.history_len
            )));
        }
        if let Some(tail) = &content.history_tail {
            if tail.counter != content.history_len {
                return Err(StoreError::InvalidCommit("history tail counter mismatch".into()));
            }
        }
        if let Some(name) = content
            .var_deleted
            .iter()
            .find(|n| parent_table.and_then(|t| t.get(n)).is_none())
        {
            return Err(StoreError::InvalidCommit(format!(
                "deleted variable {name} is not live in the data parent"
            )));
        }
        Ok(())
    }

    fn insert(&mut self, commit: Commit, offset: u64) -> Result<()> {
        self.validate(&commit.content)?;
        let table = VariableVersionTable::derive(
            commit.data_parent.as_ref().and_then(|p| self.tables.get(p)),
            &commit,
        );
        for parent in commit.parents() {
            self.children.entry(parent.clone()).or_default().push(commit.id.clone());
        }
        let id = commit.id.clone();
        self.tables.insert(id.clone(), table);
        self.offsets.insert(id.clone(), offset);
        self.order.push(id.clone());
        self.commits.insert(id, commit);
        Ok(())
    }

    fn merge_annotation(&mut self, a: Annotation) {
        let slot = self.annotations.entry(a.commit.clone()).or_insert(Annotation {
            commit: a.commit.clone(),
            tag: None,
            message: None,
        });
        if a.tag.is_some() {
            slot.tag = a.tag;
        }
        if a.message.is_some() {
            slot.message = a.message;
        }
    }

    fn append(&mut self, kind: u8, payload: &[u8], id: &CommitId) -> Result<u64> {
        let Some(disk) = self.disk.as_mut() else {
            return Ok(self.order.len() as u64);
        };
        let log = disk.log.as_mut().ok_or(StoreError::ReadOnly)?;
        let offset = disk.log_len;
        let bytes = frame(kind, payload);
        if let Err(e) = log.write_all(&bytes) {
            // Drop whatever part of the record made it out.
            let _ = log.set_len(offset);
            return Err(e.into());
        }
        if disk.sync {
            log.sync_data()?;
        }
        disk.log_len += bytes.len() as u64;
        let tag = if kind == KIND_COMMIT { 'c' } else { 'a' };
        if let Some(index) = disk.index.as_mut() {
            // The index is advisory; a failed line is repaired on next open.
            let _ = writeln!(index, "{offset} {tag} {id}");
        }
        Ok(offset)
    }

    /// Persists a commit. Identical content yields the same id and is stored
    /// once.
    pub fn persist(&mut self, content: CommitContent, created_at: u64) -> Result<CommitId> {
        let commit = Commit::seal(content, created_at);
        if self.commits.contains_key(&commit.id) {
            return Ok(commit.id);
        }
        self.validate(&commit.content)?;
        let payload = serde_json::to_vec(&commit).expect("commit serializes");
        let offset = self.append(KIND_COMMIT, &payload, &commit.id)?;
        let id = commit.id.clone();
        self.insert(commit, offset)?;
        Ok(id)
    }

    /// Attaches a tag and/or message to an existing commit.
    pub fn annotate(&mut self, id: &CommitId, tag: Option<String>, message: Option<String>) -> Result<()> {
        self.commit(id)?;
        let a = Annotation {
            commit: id.clone(),
            tag,
            message,
        };
        let payload = serde_json::to_vec(&a).expect("annotation serializes");
        self.append(KIND_ANNOTATION, &payload, id)?;
        self.merge_annotation(a);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn contains(&self, id: &CommitId) -> bool {
        self.commits.contains_key(id)
    }

    pub fn commit(&self, id: &CommitId) -> Result<&Commit> {
        self.commits
            .get(id)
            .ok_or_else(|| StoreError::UnknownCommit(id.to_string()))
    }

    /// Commits in the order they were persisted (parents before children).
    pub fn commits(&self) -> impl Iterator<Item = &Commit> {
        self.order.iter().map(|id| &self.commits[id])
    }

    pub fn latest(&self) -> Option<&Commit> {
        self.order.last().map(|id| &self.commits[id])
    }

    pub fn root(&self) -> Option<&Commit> {
        self.order.first().map(|id| &self.commits[id])
    }

    /// Distinct commits naming `id` as a code or data parent, in log order.
    pub fn children(&self, id: &CommitId) -> &[CommitId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tag(&self, id: &CommitId) -> Option<&str> {
        self.annotations
            .get(id)
            .and_then(|a| a.tag.as_deref())
            .or_else(|| self.commits.get(id).and_then(|c| c.tag.as_deref()))
    }

    pub fn message(&self, id: &CommitId) -> Option<&str> {
        self.annotations
            .get(id)
            .and_then(|a| a.message.as_deref())
            .or_else(|| self.commits.get(id).and_then(|c| c.message.as_deref()))
    }

    /// Resolves a full id or a unique prefix of at least 4 hex digits.
    pub fn resolve(&self, text: &str) -> Result<CommitId> {
        if let Some(id) = CommitId::parse(text) {
            return self.commit(&id).map(|c| c.id.clone());
        }
        if text.len() < 4 {
            return Err(StoreError::UnknownCommit(text.to_string()));
        }
        let mut matches = self.order.iter().filter(|id| id.as_str().starts_with(text));
        match (matches.next(), matches.next()) {
            (Some(id), None) => Ok(id.clone()),
            (Some(_), Some(_)) => Err(StoreError::AmbiguousCommit(text.to_string())),
            _ => Err(StoreError::UnknownCommit(text.to_string())),
        }
    }

    pub fn version_table(&self, id: &CommitId) -> Result<&VariableVersionTable> {
        self.tables
            .get(id)
            .ok_or_else(|| StoreError::UnknownCommit(id.to_string()))
    }

    /// Rebuilds a commit's variables by loading each live variable from the
    /// delta of the commit that last changed it.
    pub fn materialize_variables(&self, id: &CommitId) -> Result<Environment> {
        let table = self.version_table(id)?;
        table
            .entries
            .iter()
            .map(|(name, src)| {
                self.commit(src)?
                    .var_delta
                    .get(name)
                    .map(|v| (name.clone(), v.clone()))
                    .ok_or_else(|| StoreError::CorruptDelta {
                        commit: src.clone(),
                        name: name.clone(),
                    })
            })
            .collect()
    }

    /// Names changed or created, and names deleted, by this commit.
    pub fn changed_variables(&self, id: &CommitId) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
        let c = self.commit(id)?;
        Ok((c.var_delta.keys().cloned().collect(), c.var_deleted.clone()))
    }

    /// The execution history at a commit, rebuilt from the data-parent chain.
    pub fn history_at(&self, id: &CommitId) -> Result<Vec<HistoryEntry>> {
        let start = self.commit(id)?;
        let mut out = Vec::with_capacity(start.history_len as usize);
        let mut cursor = Some(start);
        while let Some(c) = cursor {
            if let Some(tail) = &c.history_tail {
                out.push(tail.clone());
            }
            cursor = c.data_parent.as_ref().map(|p| &self.commits[p]);
        }
        out.reverse();
        if out.len() as u64 != start.history_len {
            return Err(StoreError::Corrupt(format!(
                "commit {id} claims {} history entries but its chain has {}",
                start.history_len,
                out.len()
            )));
        }
        Ok(out)
    }

    /// Total number of variable values held across all deltas.
    pub fn stored_value_count(&self) -> usize {
        self.commits.values().map(|c| c.var_delta.len()).sum()
    }

    /// The framed bytes of a commit's log record, for disk stores.
    pub fn raw_record(&self, id: &CommitId) -> Result<Option<Vec<u8>>> {
        let Some(disk) = &self.disk else {
            return Ok(None);
        };
        let offset = *self
            .offsets
            .get(id)
            .ok_or_else(|| StoreError::UnknownCommit(id.to_string()))? as usize;
        let bytes = fs::read(disk.dir.join(LOG))?;
        match scan(&bytes[offset..]) {
            Scan::Record { len, .. } => Ok(Some(bytes[offset..offset + len].to_vec())),
            _ => Err(StoreError::Corrupt(format!("record for {id} unreadable"))),
        }
    }

    pub fn head(&self) -> Option<&Head> {
        self.head.as_ref()
    }

    pub fn set_head(&mut self, head: Head) -> Result<()> {
        self.commit(&head.code)?;
        self.commit(&head.data)?;
        self.write_meta(HEAD, format!("{}\n{}\n", head.code, head.data).as_bytes())?;
        self.head = Some(head);
        Ok(())
    }

    pub fn branches(&self) -> &BTreeMap<String, CommitId> {
        &self.branches
    }

    pub fn set_branch(&mut self, name: &str, id: &CommitId) -> Result<()> {
        self.commit(id)?;
        let mut next = self.branches.clone();
        next.insert(name.to_string(), id.clone());
        let text: String = next.iter().map(|(n, c)| format!("{n} {c}\n")).collect();
        self.write_meta(BRANCHES, text.as_bytes())?;
        self.branches = next;
        Ok(())
    }

    /// Saves the working notebook alongside the log.
    pub fn save_notebook(&mut self, code: &CodeState) -> Result<()> {
        if self.disk.is_none() {
            self.notebook = Some(code.clone());
            return Ok(());
        }
        let text = crate::notebook::export(code);
        self.write_meta(NOTEBOOK, text.as_bytes())
    }

    pub fn load_notebook(&self) -> Result<Option<CodeState>> {
        let Some(disk) = &self.disk else {
            return Ok(self.notebook.clone());
        };
        match fs::read_to_string(disk.dir.join(NOTEBOOK)) {
            Ok(text) => crate::notebook::import(&text)
                .map(Some)
                .map_err(|e| StoreError::Corrupt(format!("notebook file: {e}"))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.disk.as_ref().map(|d| d.dir.as_path())
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.dir().map(|d| d.join(LOG))
    }

    fn write_meta(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        match &self.disk {
            None => Ok(()),
            Some(d) if d.log.is_none() => Err(StoreError::ReadOnly),
            Some(d) => Ok(write_atomic(&d.dir.join(name), bytes, d.sync)?),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8], sync: bool) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        if sync {
            f.sync_all()?;
        }
    }
    fs::rename(&tmp, path)
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn known_id(text: &str, commits: &HashMap<CommitId, Commit>) -> Option<CommitId> {
    CommitId::parse(text.trim()).filter(|id| commits.contains_key(id))
}

fn read_head(path: &Path, commits: &HashMap<CommitId, Commit>) -> Result<Option<Head>> {
    let Some(text) = read_optional(path)? else {
        return Ok(None);
    };
    let mut lines = text.lines();
    let code = lines.next().and_then(|l| known_id(l, commits));
    let data = lines.next().and_then(|l| known_id(l, commits));
    Ok(code.zip(data).map(|(code, data)| Head { code, data }))
}

fn read_branches(
    path: &Path,
    commits: &HashMap<CommitId, Commit>,
) -> Result<BTreeMap<String, CommitId>> {
    let Some(text) = read_optional(path)? else {
        return Ok(BTreeMap::new());
    };
    Ok(text
        .lines()
        .filter_map(|line| {
            let (name, id) = line.rsplit_once(' ')?;
            Some((name.to_string(), known_id(id, commits)?))
        })
        .collect())
}
