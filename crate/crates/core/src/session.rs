//! The live session: a notebook, a kernel environment and an execution
//! history, auto-committed after every execution.
//!
//! After every operation each code cell is re-synchronized with the
//! history: a cell whose `(id, source)` was executed shows the counter of
//! its latest execution and the output recorded for that execution; any
//! other cell has no counter and keeps whatever output it last displayed.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{exec_one, CellOutput, Environment};
use crate::model::{
    classify_histories, is_consistent, Cell, CellId, CellKind, CheckoutClass, CheckoutMode,
    CodeState, ConsistencyReport, DataState, ExecutedIndex, HistoryEntry, Version,
};
use crate::store::{
    CommitContent, CommitId, CommitKind, Head, Store, StoreError,
};

pub const DEFAULT_BRANCH: &str = "main";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown cell {0}")]
    UnknownCell(CellId),
    #[error("cell {0} is not a code cell")]
    NotCodeCell(CellId),
    #[error("cell index {0} is out of range")]
    InvalidIndex(usize),
    #[error("checkout rejected: {}", .0.explanation())]
    Rejected(CheckoutClass),
    #[error("the store has no commits")]
    EmptyStore,
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

/// Everything observable about a session between operations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub notebook: CodeState,
    pub variables: Environment,
    pub history: Vec<HistoryEntry>,
    pub head: Head,
    pub branch: Option<String>,
}

/// Where a new cell goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "at", content = "index")]
pub enum Placement {
    End,
    Index(usize),
}

pub struct Session {
    store: Store,
    notebook: CodeState,
    env: Environment,
    history: Vec<HistoryEntry>,
    /// Output of the n-th execution at index n - 1.
    outputs: Vec<CellOutput>,
    head: Head,
    next_cell: u64,
    clock: Arc<dyn Fn() -> u64 + Send + Sync>,
}

fn wall_clock() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn cell_number(id: &CellId) -> Option<u64> {
    id.as_str().strip_prefix('c')?.parse().ok()
}

impl Session {
    /// Opens a session on `store`: recovers the latest state, or creates the
    /// empty root commit when the store is new.
    pub fn start(store: Store) -> Result<Session> {
        if store.is_empty() {
            Session::create(store)
        } else {
            Session::recover_latest(store)
        }
    }

    fn create(mut store: Store) -> Result<Session> {
        let root = CommitContent {
            code_parent: None,
            data_parent: None,
            code: CodeState::default(),
            history_len: 0,
            history_tail: None,
            var_delta: BTreeMap::new(),
            var_deleted: BTreeSet::new(),
            message: None,
            tag: None,
            branch: DEFAULT_BRANCH.to_string(),
            kind: CommitKind::Manual,
        };
        let id = store.persist(root, wall_clock())?;
        store.set_branch(DEFAULT_BRANCH, &id)?;
        store.set_head(Head::unified(id.clone()))?;
        store.save_notebook(&CodeState::default())?;
        Ok(Session {
            store,
            notebook: CodeState::default(),
            env: Environment::default(),
            history: Vec::new(),
            outputs: Vec::new(),
            head: Head::unified(id),
            next_cell: 1,
            clock: Arc::new(wall_clock),
        })
    }

    /// Rebuilds the session recorded in the store's HEAD and notebook files.
    pub fn recover_latest(mut store: Store) -> Result<Session> {
        let Some(latest) = store.latest() else {
            return Err(SessionError::EmptyStore);
        };
        let head = match store.head() {
            Some(h) => h.clone(),
            None => Head::unified(latest.id.clone()),
        };
        repair_lagging_branch(&mut store, &head.code)?;
        let notebook = match store.load_notebook()? {
            Some(n) => n,
            None => store.commit(&head.code)?.code.clone(),
        };
        let mut s = Session {
            env: store.materialize_variables(&head.data)?,
            history: store.history_at(&head.data)?,
            outputs: outputs_at(&store, &head.data)?,
            notebook,
            head,
            next_cell: 1,
            clock: Arc::new(wall_clock),
            store,
        };
        s.next_cell = s.scan_next_cell();
        s.sync_cells();
        Ok(s)
    }

    /// Replaces the timestamp source (unix milliseconds).
    pub fn set_clock(&mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) {
        self.clock = Arc::new(clock);
    }

    fn scan_next_cell(&self) -> u64 {
        let stored = self
            .store
            .commits()
            .flat_map(|c| c.code.cells.iter())
            .chain(&self.notebook.cells)
            .filter_map(|c| cell_number(&c.id))
            .max()
            .unwrap_or(0);
        stored + 1
    }

    /// An independent copy backed by an in-memory store.
    pub fn fork(&self) -> Session {
        let mut store = self.store.to_memory();
        store.save_notebook(&self.notebook).expect("in-memory save");
        Session {
            store,
            notebook: self.notebook.clone(),
            env: self.env.clone(),
            history: self.history.clone(),
            outputs: self.outputs.clone(),
            head: self.head.clone(),
            next_cell: self.next_cell,
            clock: self.clock.clone(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn notebook(&self) -> &CodeState {
        &self.notebook
    }

    pub fn variables(&self) -> &Environment {
        &self.env
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn next_counter(&self) -> u64 {
        self.history.len() as u64 + 1
    }

    /// The branch an execution would extend; `None` when detached.
    pub fn branch(&self) -> Option<String> {
        let code = &self.head.code;
        let own = &self.store.commit(code).ok()?.branch;
        if self.store.branches().get(own) == Some(code) {
            return Some(own.clone());
        }
        self.store
            .branches()
            .iter()
            .find(|(_, tip)| *tip == code)
            .map(|(name, _)| name.clone())
    }

    pub fn version(&self) -> Version {
        Version {
            code: self.notebook.clone(),
            data: DataState {
                variables: self.env.clone(),
                history: self.history.clone(),
            },
        }
    }

    pub fn check(&self) -> ConsistencyReport {
        is_consistent(&self.version())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            notebook: self.notebook.clone(),
            variables: self.env.clone(),
            history: self.history.clone(),
            head: self.head.clone(),
            branch: self.branch(),
        }
    }

    fn sync_cells(&mut self) {
        let index = ExecutedIndex::new(&self.history);
        for cell in &mut self.notebook.cells {
            match index.position_of(cell) {
                Some(n) => {
                    let out = &self.outputs[n as usize - 1];
                    cell.exec_counter = Some(n);
                    cell.output = out.text.clone();
                    cell.error = out.error;
                }
                None => cell.exec_counter = None,
            }
        }
    }

    fn save_notebook(&mut self) -> Result<()> {
        self.sync_cells();
        self.store.save_notebook(&self.notebook)?;
        Ok(())
    }

    fn cell_position(&self, id: &CellId) -> Result<usize> {
        self.notebook
            .position(id)
            .ok_or_else(|| SessionError::UnknownCell(id.clone()))
    }

    pub fn add_cell(&mut self, kind: CellKind, source: &str, at: Placement) -> Result<CellId> {
        let index = match at {
            Placement::End => self.notebook.cells.len(),
            Placement::Index(i) if i <= self.notebook.cells.len() => i,
            Placement::Index(i) => return Err(SessionError::InvalidIndex(i)),
        };
        let id = CellId(format!("c{}", self.next_cell));
        let cell = match kind {
            CellKind::Code => Cell::code(id.as_str(), source),
            CellKind::Markdown => Cell::markdown(id.as_str(), source),
        };
        self.notebook.cells.insert(index, cell);
        self.next_cell += 1;
        self.save_notebook()?;
        Ok(id)
    }

    /// Changes a cell's source. Its displayed output stays until it runs
    /// again, but it no longer counts as executed.
    pub fn edit_cell(&mut self, id: &CellId, source: &str) -> Result<()> {
        let pos = self.cell_position(id)?;
        self.notebook.cells[pos].source = source.to_string();
        self.save_notebook()
    }

    pub fn delete_cell(&mut self, id: &CellId) -> Result<()> {
        let pos = self.cell_position(id)?;
        self.notebook.cells.remove(pos);
        self.save_notebook()
    }

    pub fn move_cell(&mut self, id: &CellId, to: usize) -> Result<()> {
        let pos = self.cell_position(id)?;
        if to >= self.notebook.cells.len() {
            return Err(SessionError::InvalidIndex(to));
        }
        let cell = self.notebook.cells.remove(pos);
        self.notebook.cells.insert(to, cell);
        self.save_notebook()
    }

    fn branch_for_commit(&self) -> (String, bool) {
        match self.branch() {
            Some(b) => (b, false),
            None => {
                let taken = self.store.branches();
                let n = (1..).find(|n| !taken.contains_key(&format!("b{n}"))).unwrap();
                (format!("b{n}"), true)
            }
        }
    }

    fn commit(&mut self, mut content: CommitContent) -> Result<CommitId> {
        let (branch, _) = self.branch_for_commit();
        content.branch = branch.clone();
        let id = self.store.persist(content, (self.clock)())?;
        self.head = Head::unified(id.clone());
        self.store.set_head(self.head.clone())?;
        self.store.set_branch(&branch, &id)?;
        Ok(id)
    }

    /// Runs a code cell and records the result as a new commit.
    pub fn execute_cell(&mut self, id: &CellId) -> Result<CommitId> {
        let pos = self.cell_position(id)?;
        let cell = &self.notebook.cells[pos];
        if cell.kind != CellKind::Code {
            return Err(SessionError::NotCodeCell(id.clone()));
        }
        let source = cell.source.clone();
        let result = exec_one(self.env.clone(), &source);

        let var_delta: BTreeMap<String, _> = result
            .env
            .iter()
            .filter(|(name, value)| self.env.get(name) != Some(*value))
            .map(|(name, value)| (name.to_string(), value.clone()))
            .collect();
        let var_deleted: BTreeSet<String> = self
            .env
            .names()
            .filter(|name| !result.env.contains(name))
            .map(str::to_string)
            .collect();

        let n = self.next_counter();
        let entry = HistoryEntry {
            cell_id: id.clone(),
            source,
            counter: n,
        };
        let mut code = self.notebook.clone();
        {
            let c = &mut code.cells[pos];
            c.output = result.output.text.clone();
            c.error = result.output.error;
            c.exec_counter = Some(n);
        }
        let content = CommitContent {
            code_parent: Some(self.head.code.clone()),
            data_parent: Some(self.head.data.clone()),
            code: code.clone(),
            history_len: n,
            history_tail: Some(entry.clone()),
            var_delta,
            var_deleted,
            message: None,
            tag: None,
            branch: String::new(),
            kind: CommitKind::Auto,
        };
        let commit_id = self.commit(content)?;
        self.notebook = code;
        self.env = result.env;
        self.history.push(entry);
        self.outputs.push(result.output);
        self.save_notebook()?;
        Ok(commit_id)
    }

    /// Commits the current notebook without executing anything.
    pub fn commit_manual(&mut self, message: Option<String>, tag: Option<String>) -> Result<CommitId> {
        let content = CommitContent {
            code_parent: Some(self.head.code.clone()),
            data_parent: Some(self.head.data.clone()),
            code: self.notebook.clone(),
            history_len: self.history.len() as u64,
            history_tail: None,
            var_delta: BTreeMap::new(),
            var_deleted: BTreeSet::new(),
            message,
            tag,
            branch: String::new(),
            kind: CommitKind::Manual,
        };
        let id = self.commit(content)?;
        self.save_notebook()?;
        Ok(id)
    }

    /// Attaches a tag and/or message to any commit.
    pub fn annotate(&mut self, id: &CommitId, tag: Option<String>, message: Option<String>) -> Result<()> {
        Ok(self.store.annotate(id, tag, message)?)
    }

    pub fn classify(&self, target: &CommitId, mode: CheckoutMode) -> Result<CheckoutClass> {
        let target_history = self.store.history_at(target)?;
        Ok(classify_histories(&self.history, &target_history, mode))
    }

    /// Restores code and data from one commit.
    pub fn checkout_both(&mut self, target: &CommitId) -> Result<()> {
        let commit = self.store.commit(target)?;
        if self.head == Head::unified(target.clone()) {
            return Ok(());
        }
        let notebook = commit.code.clone();
        let env = self.store.materialize_variables(target)?;
        let history = self.store.history_at(target)?;
        let outputs = outputs_at(&self.store, target)?;
        let head = Head::unified(target.clone());
        self.store.set_head(head.clone())?;
        self.head = head;
        self.notebook = notebook;
        self.env = env;
        self.history = history;
        self.outputs = outputs;
        self.save_notebook()
    }

    /// Restores a past data state while keeping the current code. Only
    /// targets whose history is a prefix of the current one are accepted.
    pub fn rollback_data(&mut self, target: &CommitId) -> Result<CheckoutClass> {
        let class = self.classify(target, CheckoutMode::DataOnly)?;
        if class != CheckoutClass::SafePastData {
            return Err(SessionError::Rejected(class));
        }
        if *target == self.head.data {
            return Ok(class);
        }
        let env = self.store.materialize_variables(target)?;
        let len = self.store.commit(target)?.history_len as usize;
        let head = Head {
            code: self.head.code.clone(),
            data: target.clone(),
        };
        self.store.set_head(head.clone())?;
        self.head = head;
        self.env = env;
        self.history.truncate(len);
        self.outputs.truncate(len);
        self.save_notebook()?;
        Ok(class)
    }

    /// Dispatches a checkout request; code-only checkouts are always
    /// refused.
    pub fn checkout(&mut self, target: &CommitId, mode: CheckoutMode) -> Result<CheckoutClass> {
        match mode {
            CheckoutMode::Both => self.checkout_both(target).map(|_| CheckoutClass::SafeBoth),
            CheckoutMode::DataOnly => self.rollback_data(target),
            CheckoutMode::CodeOnly => {
                self.store.commit(target)?;
                Err(SessionError::Rejected(CheckoutClass::UnsafeOnlyCode))
            }
        }
    }
}

/// Recorded outputs of every execution in a commit's history, read back
/// from the commits that performed them.
pub fn outputs_at(store: &Store, id: &CommitId) -> Result<Vec<CellOutput>> {
    let mut out = Vec::new();
    let mut cursor = Some(store.commit(id)?);
    while let Some(c) = cursor {
        if let Some(tail) = &c.history_tail {
            let cell = c.code.get(&tail.cell_id).ok_or_else(|| {
                StoreError::Corrupt(format!("commit {} lacks executed cell {}", c.id, tail.cell_id))
            })?;
            out.push(cell.displayed());
        }
        cursor = match &c.data_parent {
            Some(p) => Some(store.commit(p)?),
            None => None,
        };
    }
    out.reverse();
    Ok(out)
}

/// Metadata files are written one at a time, so a crash can leave the head
/// commit's branch pointing at its code parent. Move it forward.
fn repair_lagging_branch(store: &mut Store, head_code: &CommitId) -> Result<()> {
    let commit = store.commit(head_code)?;
    let name = commit.branch.clone();
    let lagging = match (&commit.code_parent, store.branches().get(&name)) {
        (Some(parent), Some(tip)) => tip == parent,
        (_, None) => commit.code_parent.is_some(),
        _ => false,
    };
    if lagging {
        store.set_branch(&name, head_code)?;
    }
    Ok(())
}
