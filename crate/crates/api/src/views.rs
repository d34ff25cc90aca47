//! JSON payloads. Each is a pure function of the store (and, for the live
//! views, the session), so the CLI's `--json` output reuses them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use statevc_core::graph::{fold, lane_count, linearize, user_important, FoldItem, GraphRow, GroupedCommit};
use statevc_core::model::{Cell, CheckoutClass};
use statevc_core::search::{search, SearchQuery};
use statevc_core::session::Session;
use statevc_core::store::{CommitId, CommitKind, Head, Store, StoreError};

pub const DEFAULT_REPR_CAP: usize = 256;
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPayload {
    pub fold: bool,
    pub lanes: usize,
    /// Commits shown individually, top to bottom.
    pub rows: Vec<GraphRow>,
    /// Collapsed runs of unimportant commits; empty unless folding.
    pub groups: Vec<GroupedCommit>,
    /// Rows and groups interleaved in display order.
    pub items: Vec<FoldItem>,
}

pub fn graph(store: &Store, head: Option<&Head>, folded: bool) -> GraphPayload {
    let rows = linearize(store, head, store.branches());
    let lanes = lane_count(&rows);
    let items = if folded {
        fold(&rows, &user_important(store)).items
    } else {
        rows.iter().cloned().map(FoldItem::Commit).collect()
    };
    let mut visible = Vec::new();
    let mut groups = Vec::new();
    for item in &items {
        match item {
            FoldItem::Commit(r) => visible.push(r.clone()),
            FoldItem::Group(g) => groups.push(g.clone()),
        }
    }
    GraphPayload {
        fold: folded,
        lanes,
        rows: visible,
        groups,
        items,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitView {
    pub id: CommitId,
    pub code_parent: Option<CommitId>,
    pub data_parent: Option<CommitId>,
    pub kind: CommitKind,
    pub branch: String,
    pub tag: Option<String>,
    pub message: Option<String>,
    pub created_at: u64,
    pub history_len: u64,
    pub cells: Vec<Cell>,
    pub changed_variables: BTreeSet<String>,
    pub deleted_variables: BTreeSet<String>,
}

pub fn commit(store: &Store, id: &CommitId) -> Result<CommitView, StoreError> {
    let c = store.commit(id)?;
    let (changed, deleted) = store.changed_variables(id)?;
    Ok(CommitView {
        id: c.id.clone(),
        code_parent: c.code_parent.clone(),
        data_parent: c.data_parent.clone(),
        kind: c.kind,
        branch: c.branch.clone(),
        tag: store.tag(id).map(str::to_string),
        message: store.message(id).map(str::to_string),
        created_at: c.created_at,
        history_len: c.history_len,
        cells: c.code.cells.clone(),
        changed_variables: changed,
        deleted_variables: deleted,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableView {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: String,
    pub repr: String,
    pub truncated: bool,
    /// Commit whose execution last changed the variable.
    pub changed_in: CommitId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariablePage {
    pub commit: CommitId,
    pub total: usize,
    /// Number of names matching the filter; they come first.
    pub matched: usize,
    pub page: usize,
    pub page_size: usize,
    pub variables: Vec<VariableView>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableQuery {
    pub page: usize,
    pub page_size: usize,
    pub filter: Option<String>,
    pub repr_cap: usize,
}

impl Default for VariableQuery {
    fn default() -> Self {
        VariableQuery {
            page: 0,
            page_size: DEFAULT_PAGE_SIZE,
            filter: None,
            repr_cap: DEFAULT_REPR_CAP,
        }
    }
}

/// Cuts `text` to at most `cap` bytes on a char boundary.
pub fn truncate_repr(text: &str, cap: usize) -> (String, bool) {
    if text.len() <= cap {
        return (text.to_string(), false);
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    (text[..end].to_string(), true)
}

/// Variables live at a commit, sorted by name, with filter matches pinned
/// to the front.
pub fn variables(store: &Store, id: &CommitId, q: &VariableQuery) -> Result<VariablePage, StoreError> {
    let env = store.materialize_variables(id)?;
    let table = store.version_table(id)?;
    let mut names: Vec<&str> = env.names().collect();
    names.sort_unstable();
    let hit = |n: &str| {
        q.filter
            .as_deref()
            .is_some_and(|f| !f.is_empty() && statevc_core::search::contains_folded(n, f))
    };
    let (mut ordered, rest): (Vec<&str>, Vec<&str>) = names.into_iter().partition(|n| hit(n));
    let matched = ordered.len();
    ordered.extend(rest);
    let page_size = q.page_size.clamp(1, MAX_PAGE_SIZE);
    let variables = ordered
        .iter()
        .skip(q.page.saturating_mul(page_size))
        .take(page_size)
        .map(|name| {
            let value = env.get(name).expect("listed name is live");
            let (repr, truncated) = truncate_repr(&value.repr(), q.repr_cap);
            VariableView {
                name: name.to_string(),
                type_name: value.type_name().to_string(),
                repr,
                truncated,
                changed_in: table.get(name).cloned().expect("live name has a source commit"),
            }
        })
        .collect();
    Ok(VariablePage {
        commit: id.clone(),
        total: ordered.len(),
        matched,
        page: q.page,
        page_size,
        variables,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPayload {
    pub query: String,
    pub commits: Vec<CommitId>,
}

pub fn search_payload(store: &Store, q: &SearchQuery) -> SearchPayload {
    SearchPayload {
        query: q.to_string(),
        commits: search(store, q),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadView {
    pub code: CommitId,
    pub data: CommitId,
    pub split: bool,
    pub branch: Option<String>,
    pub next_counter: u64,
}

pub fn head(s: &Session) -> HeadView {
    let h = s.head();
    HeadView {
        code: h.code.clone(),
        data: h.data.clone(),
        split: h.is_split(),
        branch: s.branch(),
        next_counter: s.next_counter(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookView {
    pub cells: Vec<Cell>,
    pub head: HeadView,
    pub consistent: bool,
}

pub fn notebook(s: &Session) -> NotebookView {
    NotebookView {
        cells: s.notebook().cells.clone(),
        head: head(s),
        consistent: s.check().is_consistent(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecuteResult {
    pub commit: CommitId,
    pub cell: Cell,
    pub head: HeadView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckoutResult {
    pub checkout_class: CheckoutClass,
    pub head: HeadView,
}
