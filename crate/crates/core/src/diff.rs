//! Commit diffs: cells aligned by id with line-level edit scripts, and
//! variables compared through their version tables.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::{Cell, CellId, CodeState};
use crate::store::{CommitId, Store, StoreError, VariableVersionTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "line", rename_all = "lowercase")]
pub enum LineOp {
    Keep(String),
    Insert(String),
    Delete(String),
}

/// Splits a cell source into lines; the empty source has none.
pub fn lines(source: &str) -> Vec<&str> {
    if source.is_empty() {
        Vec::new()
    } else {
        source.split('\n').collect()
    }
}

/// A minimal edit script turning `a` into `b` (Myers' O(ND) algorithm).
pub fn myers<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Vec<Edit<T>> {
    let (n, m) = (a.len() as isize, b.len() as isize);
    let max = (n + m) as usize;
    let offset = max as isize + 1;
    let mut v = vec![0isize; 2 * max + 3];
    let mut trace: Vec<Vec<isize>> = Vec::new();
    'outer: for d in 0..=max as isize {
        trace.push(v.clone());
        let mut k = -d;
        while k <= d {
            let idx = (k + offset) as usize;
            let mut x = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) {
                v[idx + 1]
            } else {
                v[idx - 1] + 1
            };
            let mut y = x - k;
            while x < n && y < m && a[x as usize] == b[y as usize] {
                x += 1;
                y += 1;
            }
            v[idx] = x;
            if x >= n && y >= m {
                break 'outer;
            }
            k += 2;
        }
    }

    let mut edits = Vec::new();
    let (mut x, mut y) = (n, m);
    for (d, v) in trace.iter().enumerate().rev() {
        let d = d as isize;
        let k = x - y;
        let idx = (k + offset) as usize;
        let prev_k = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) {
            k + 1
        } else {
            k - 1
        };
        let prev_x = v[(prev_k + offset) as usize];
        let prev_y = prev_x - prev_k;
        while x > prev_x && y > prev_y {
            x -= 1;
            y -= 1;
            edits.push(Edit::Keep(a[x as usize].clone()));
        }
        if d > 0 {
            if x == prev_x {
                y -= 1;
                edits.push(Edit::Insert(b[y as usize].clone()));
            } else {
                x -= 1;
                edits.push(Edit::Delete(a[x as usize].clone()));
            }
        }
    }
    edits.reverse();
    edits
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit<T> {
    Keep(T),
    Insert(T),
    Delete(T),
}

pub fn line_diff(a: &str, b: &str) -> Vec<LineOp> {
    myers(&lines(a), &lines(b))
        .into_iter()
        .map(|e| match e {
            Edit::Keep(l) => LineOp::Keep(l.to_string()),
            Edit::Insert(l) => LineOp::Insert(l.to_string()),
            Edit::Delete(l) => LineOp::Delete(l.to_string()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum CellOp {
    Added { cell: Cell },
    Deleted { cell: Cell },
    Kept { cell: Cell },
    /// `cell` is the right-hand cell; `lines` rewrites the left source.
    Modified {
        cell_id: CellId,
        lines: Vec<LineOp>,
        cell: Cell,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CodeDiff {
    pub cells: Vec<CellOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatchError {
    #[error("cell {0} is not in the left code state")]
    MissingCell(CellId),
    #[error("line script does not match the source of cell {0}")]
    LineMismatch(CellId),
}

fn cell_op(left: &Cell, right: &Cell) -> CellOp {
    if left == right {
        CellOp::Kept { cell: right.clone() }
    } else {
        CellOp::Modified {
            cell_id: right.id.clone(),
            lines: line_diff(&left.source, &right.source),
            cell: right.clone(),
        }
    }
}

/// Aligns cells by id. Cells on both sides appear in right-hand order;
/// deleted cells appear where they stood on the left.
pub fn diff_code_states(left: &CodeState, right: &CodeState) -> CodeDiff {
    let right_ids: HashSet<&CellId> = right.cells.iter().map(|c| &c.id).collect();
    let left_ids: HashSet<&CellId> = left.cells.iter().map(|c| &c.id).collect();
    let mut consumed: HashSet<&CellId> = HashSet::new();
    let mut ops = Vec::new();
    let (mut i, mut j) = (0, 0);
    loop {
        while i < left.cells.len() && consumed.contains(&left.cells[i].id) {
            i += 1;
        }
        let l = left.cells.get(i);
        let r = right.cells.get(j);
        match (l, r) {
            (None, None) => break,
            (Some(l), _) if !right_ids.contains(&l.id) => {
                ops.push(CellOp::Deleted { cell: l.clone() });
                i += 1;
            }
            (_, Some(r)) if !left_ids.contains(&r.id) => {
                ops.push(CellOp::Added { cell: r.clone() });
                j += 1;
            }
            (Some(l), Some(r)) if l.id == r.id => {
                ops.push(cell_op(l, r));
                i += 1;
                j += 1;
            }
            (_, Some(r)) => {
                // Moved: emit at its right-hand position.
                let l = left.get(&r.id).expect("id is on both sides");
                ops.push(cell_op(l, r));
                consumed.insert(&r.id);
                j += 1;
            }
            (Some(_), None) => unreachable!("every remaining left cell was matched or deleted"),
        }
    }
    CodeDiff { cells: ops }
}

fn apply_lines(id: &CellId, source: &str, ops: &[LineOp]) -> Result<String, PatchError> {
    let old = lines(source);
    let mut i = 0;
    let mut out: Vec<&str> = Vec::new();
    for op in ops {
        match op {
            LineOp::Keep(l) | LineOp::Delete(l) => {
                if old.get(i) != Some(&l.as_str()) {
                    return Err(PatchError::LineMismatch(id.clone()));
                }
                if matches!(op, LineOp::Keep(_)) {
                    out.push(l);
                }
                i += 1;
            }
            LineOp::Insert(l) => out.push(l),
        }
    }
    if i != old.len() {
        return Err(PatchError::LineMismatch(id.clone()));
    }
    Ok(out.join("\n"))
}

impl CodeDiff {
    /// Rebuilds the right-hand code state from the left one.
    pub fn apply(&self, left: &CodeState) -> Result<CodeState, PatchError> {
        let mut cells = Vec::new();
        for op in &self.cells {
            match op {
                CellOp::Added { cell } => cells.push(cell.clone()),
                CellOp::Deleted { cell } => {
                    left.get(&cell.id)
                        .ok_or_else(|| PatchError::MissingCell(cell.id.clone()))?;
                }
                CellOp::Kept { cell } => {
                    let l = left
                        .get(&cell.id)
                        .ok_or_else(|| PatchError::MissingCell(cell.id.clone()))?;
                    cells.push(l.clone());
                }
                CellOp::Modified { cell_id, lines, cell } => {
                    let l = left
                        .get(cell_id)
                        .ok_or_else(|| PatchError::MissingCell(cell_id.clone()))?;
                    let source = apply_lines(cell_id, &l.source, lines)?;
                    cells.push(Cell {
                        source,
                        ..cell.clone()
                    });
                }
            }
        }
        Ok(CodeState::new(cells))
    }

    pub fn is_identity(&self) -> bool {
        self.cells.iter().all(|op| matches!(op, CellOp::Kept { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VariableDiff {
    pub changed: BTreeSet<String>,
    pub added_right: BTreeSet<String>,
    pub deleted_right: BTreeSet<String>,
    pub unchanged: BTreeSet<String>,
}

/// Compares two version tables without touching any value.
pub fn diff_tables(a: &VariableVersionTable, b: &VariableVersionTable) -> VariableDiff {
    let mut d = VariableDiff::default();
    for (name, src) in &a.entries {
        match b.get(name) {
            None => d.deleted_right.insert(name.clone()),
            Some(other) if other == src => d.unchanged.insert(name.clone()),
            Some(_) => d.changed.insert(name.clone()),
        };
    }
    for name in b.entries.keys() {
        if a.get(name).is_none() {
            d.added_right.insert(name.clone());
        }
    }
    d
}

pub fn diff_variables(store: &Store, a: &CommitId, b: &CommitId) -> Result<VariableDiff, StoreError> {
    Ok(diff_tables(store.version_table(a)?, store.version_table(b)?))
}

pub fn diff_code(store: &Store, a: &CommitId, b: &CommitId) -> Result<CodeDiff, StoreError> {
    Ok(diff_code_states(&store.commit(a)?.code, &store.commit(b)?.code))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitDiff {
    pub a: CommitId,
    pub b: CommitId,
    pub code: CodeDiff,
    pub variables: VariableDiff,
}

pub fn diff_commits(store: &Store, a: &CommitId, b: &CommitId) -> Result<CommitDiff, StoreError> {
    Ok(CommitDiff {
        a: a.clone(),
        b: b.clone(),
        code: diff_code(store, a, b)?,
        variables: diff_variables(store, a, b)?,
    })
}
