//! One-dimensional layout of the commit graph, plus auto-folding.
//!
//! Rows run newest first. A commit is emitted once all of its children
//! have been, and the most recently unblocked commit goes next, so a
//! single-child chain always occupies consecutive rows. Commits unblocked at
//! the same moment (the initial leaves, or the two parents of a merge) are
//! ordered by descending history length, then ascending id.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::store::{CommitId, Head, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    CodeParent,
    DataParent,
    BothParents,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub to: CommitId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    HeadCode,
    HeadData,
    Branch { name: String },
    Tag { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRow {
    pub commit: CommitId,
    pub row: usize,
    pub lane: usize,
    pub edges: Vec<GraphEdge>,
    pub labels: Vec<Label>,
}

/// Parent edges of a commit: one `BothParents` edge when the parents
/// coincide, otherwise code parent first.
pub fn parent_edges(code: Option<&CommitId>, data: Option<&CommitId>) -> Vec<GraphEdge> {
    match (code, data) {
        (Some(c), Some(d)) if c == d => vec![GraphEdge {
            to: c.clone(),
            kind: EdgeKind::BothParents,
        }],
        (c, d) => c
            .map(|c| GraphEdge {
                to: c.clone(),
                kind: EdgeKind::CodeParent,
            })
            .into_iter()
            .chain(d.map(|d| GraphEdge {
                to: d.clone(),
                kind: EdgeKind::DataParent,
            }))
            .collect(),
    }
}

/// Lays out every commit in the store.
pub fn linearize(
    store: &Store,
    head: Option<&Head>,
    branches: &BTreeMap<String, CommitId>,
) -> Vec<GraphRow> {
    let priority = |a: &&CommitId, b: &&CommitId| {
        let len = |id: &CommitId| store.commit(id).map(|c| c.history_len).unwrap_or(0);
        len(b).cmp(&len(a)).then_with(|| a.cmp(b))
    };
    let mut pending: HashMap<&CommitId, usize> = store
        .commits()
        .map(|c| (&c.id, store.children(&c.id).len()))
        .collect();

    let mut stack: Vec<&CommitId> = Vec::new();
    let mut leaves: Vec<&CommitId> = pending
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(id, _)| *id)
        .collect();
    leaves.sort_by(priority);
    stack.extend(leaves.into_iter().rev());

    let mut labels: HashMap<&CommitId, Vec<Label>> = HashMap::new();
    if let Some(h) = head {
        labels.entry(&h.code).or_default().push(Label::HeadCode);
        labels.entry(&h.data).or_default().push(Label::HeadData);
    }
    for (name, id) in branches {
        labels
            .entry(id)
            .or_default()
            .push(Label::Branch { name: name.clone() });
    }

    let mut lanes = Lanes::default();
    let mut rows = Vec::with_capacity(pending.len());
    while let Some(id) = stack.pop() {
        let commit = store.commit(id).expect("ids come from the store");
        let edges = parent_edges(commit.code_parent.as_ref(), commit.data_parent.as_ref());
        let lane = lanes.place(id, &edges);

        let mut unblocked: Vec<&CommitId> = Vec::new();
        for e in &edges {
            let n = pending.get_mut(&e.to).expect("parent is stored");
            *n -= 1;
            if *n == 0 {
                unblocked.push(&store.commit(&e.to).unwrap().id);
            }
        }
        unblocked.sort_by(priority);
        stack.extend(unblocked.into_iter().rev());

        let mut l = labels.remove(id).unwrap_or_default();
        if let Some(tag) = store.tag(id) {
            l.push(Label::Tag { name: tag.to_string() });
        }
        l.sort();
        rows.push(GraphRow {
            commit: id.clone(),
            row: rows.len(),
            lane,
            edges,
            labels: l,
        });
    }
    rows
}

/// Lane slots, each waiting for the commit that continues its chain.
#[derive(Default)]
struct Lanes {
    expecting: Vec<Option<CommitId>>,
}

impl Lanes {
    fn free_slot(&mut self) -> usize {
        match self.expecting.iter().position(Option::is_none) {
            Some(i) => i,
            None => {
                self.expecting.push(None);
                self.expecting.len() - 1
            }
        }
    }

    fn expected(&self, id: &CommitId) -> Option<usize> {
        self.expecting.iter().position(|e| e.as_ref() == Some(id))
    }

    fn place(&mut self, id: &CommitId, edges: &[GraphEdge]) -> usize {
        let lane = match self.expected(id) {
            Some(l) => {
                for slot in &mut self.expecting {
                    if slot.as_ref() == Some(id) {
                        *slot = None;
                    }
                }
                l
            }
            None => self.free_slot(),
        };
        let mut first = true;
        for e in edges {
            if self.expected(&e.to).is_some() {
                first = false;
                continue;
            }
            let slot = if first { lane } else { self.free_slot() };
            self.expecting[slot] = Some(e.to.clone());
            first = false;
        }
        lane
    }
}

pub fn lane_count(rows: &[GraphRow]) -> usize {
    rows.iter().map(|r| r.lane + 1).max().unwrap_or(0)
}

/// Number of commits with more than one child.
pub fn branch_points(rows: &[GraphRow]) -> usize {
    child_counts(rows).values().filter(|n| **n > 1).count()
}

fn child_counts(rows: &[GraphRow]) -> HashMap<&CommitId, usize> {
    let mut counts: HashMap<&CommitId, usize> = rows.iter().map(|r| (&r.commit, 0)).collect();
    for r in rows {
        for e in &r.edges {
            *counts.entry(&e.to).or_default() += 1;
        }
    }
    counts
}

/// A run of unimportant commits shown as one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedCommit {
    pub group_id: String,
    pub members: Vec<CommitId>,
    pub collapsed: bool,
    pub rows: Vec<GraphRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FoldItem {
    Commit(GraphRow),
    Group(GroupedCommit),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown group {0}")]
    UnknownGroup(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FoldedGraph {
    pub items: Vec<FoldItem>,
}

pub fn group_id(members: &[CommitId]) -> String {
    let mut h = Sha256::new();
    for m in members {
        h.update(m.as_str());
        h.update(b"\n");
    }
    hex::encode(&h.finalize()[..8])
}

/// Whether a row is hidden by folding: it has no tag or message, exactly
/// one parent and exactly one child.
pub fn is_foldable(row: &GraphRow, children: usize, user_important: &HashSet<CommitId>) -> bool {
    !user_important.contains(&row.commit) && row.edges.len() == 1 && children == 1
}

/// Collapses maximal runs of foldable commits. `user_important` holds the
/// commits carrying a tag or message.
pub fn fold(rows: &[GraphRow], user_important: &HashSet<CommitId>) -> FoldedGraph {
    let children = child_counts(rows);
    let mut items = Vec::new();
    let mut run: Vec<GraphRow> = Vec::new();
    let flush = |run: &mut Vec<GraphRow>, items: &mut Vec<FoldItem>| {
        if run.is_empty() {
            return;
        }
        let members: Vec<CommitId> = run.iter().map(|r| r.commit.clone()).collect();
        items.push(FoldItem::Group(GroupedCommit {
            group_id: group_id(&members),
            members,
            collapsed: true,
            rows: std::mem::take(run),
        }));
    };
    for row in rows {
        if is_foldable(row, children[&row.commit], user_important) {
            let continues = run
                .last()
                .is_some_and(|prev| prev.edges[0].to == row.commit);
            if !continues {
                flush(&mut run, &mut items);
            }
            run.push(row.clone());
        } else {
            flush(&mut run, &mut items);
            items.push(FoldItem::Commit(row.clone()));
        }
    }
    flush(&mut run, &mut items);
    FoldedGraph { items }
}

impl FoldedGraph {
    pub fn groups(&self) -> impl Iterator<Item = &GroupedCommit> {
        self.items.iter().filter_map(|i| match i {
            FoldItem::Group(g) => Some(g),
            FoldItem::Commit(_) => None,
        })
    }

    /// Member rows of a group, in original order.
    pub fn expand(&self, group_id: &str) -> Result<Vec<GraphRow>, GraphError> {
        self.groups()
            .find(|g| g.group_id == group_id)
            .map(|g| g.rows.clone())
            .ok_or_else(|| GraphError::UnknownGroup(group_id.to_string()))
    }

    /// Marks a group expanded in place.
    pub fn set_collapsed(&mut self, group_id: &str, collapsed: bool) -> Result<(), GraphError> {
        for item in &mut self.items {
            if let FoldItem::Group(g) = item {
                if g.group_id == group_id {
                    g.collapsed = collapsed;
                    return Ok(());
                }
            }
        }
        Err(GraphError::UnknownGroup(group_id.to_string()))
    }

    pub fn expand_all(&self) -> Vec<GraphRow> {
        self.items
            .iter()
            .flat_map(|i| match i {
                FoldItem::Commit(r) => vec![r.clone()],
                FoldItem::Group(g) => g.rows.clone(),
            })
            .collect()
    }

    /// Commits shown as their own node (not inside a group).
    pub fn visible(&self) -> Vec<&CommitId> {
        self.items
            .iter()
            .filter_map(|i| match i {
                FoldItem::Commit(r) => Some(&r.commit),
                FoldItem::Group(_) => None,
            })
            .collect()
    }
}

/// Commits with a tag or message.
pub fn user_important(store: &Store) -> HashSet<CommitId> {
    store
        .commits()
        .filter(|c| store.tag(&c.id).is_some() || store.message(&c.id).is_some())
        .map(|c| c.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u8) -> CommitId {
        CommitId::parse(&format!("{:064x}", n)).unwrap()
    }

    fn row(n: u8, parents: &[u8]) -> GraphRow {
        GraphRow {
            commit: id(n),
            row: 0,
            lane: 0,
            edges: parents
                .iter()
                .map(|p| GraphEdge {
                    to: id(*p),
                    kind: EdgeKind::BothParents,
                })
                .collect(),
            labels: vec![],
        }
    }

    /// leaf(5) - c(4) - b(3) - a(2) - root(1)
    fn chain() -> Vec<GraphRow> {
        vec![row(5, &[4]), row(4, &[3]), row(3, &[2]), row(2, &[1]), row(1, &[])]
    }

    fn group_members(f: &FoldedGraph) -> Vec<Vec<CommitId>> {
        f.groups().map(|g| g.members.clone()).collect()
    }

    #[test]
    fn untagged_chain_folds_interior() {
        let f = fold(&chain(), &HashSet::new());
        assert_eq!(f.visible(), [&id(5), &id(1)]);
        assert_eq!(group_members(&f), [vec![id(4), id(3), id(2)]]);
        assert_eq!(f.expand_all(), chain());
    }

    #[test]
    fn tag_splits_group() {
        let f = fold(&chain(), &[id(3)].into());
        assert_eq!(f.visible(), [&id(5), &id(3), &id(1)]);
        assert_eq!(group_members(&f), [vec![id(4)], vec![id(2)]]);
    }

    #[test]
    fn branch_point_never_folded() {
        // 4 and 3 are both children of 2.
        let rows = vec![row(4, &[2]), row(3, &[2]), row(2, &[1]), row(1, &[])];
        let f = fold(&rows, &HashSet::new());
        assert!(f.visible().contains(&&id(2)));
        assert_eq!(f.groups().count(), 0);
    }

    #[test]
    fn expand_and_unknown_group() {
        let mut f = fold(&chain(), &HashSet::new());
        let g = f.groups().next().unwrap().group_id.clone();
        assert_eq!(f.expand(&g).unwrap(), chain()[1..4].to_vec());
        assert_eq!(f.expand("nope"), Err(GraphError::UnknownGroup("nope".into())));
        let before = f.clone();
        f.set_collapsed(&g, false).unwrap();
        f.set_collapsed(&g, true).unwrap();
        assert_eq!(f, before);
        assert_eq!(fold(&f.expand_all(), &HashSet::new()), before);
    }

    #[test]
    fn parent_edges_collapse_when_equal() {
        assert_eq!(parent_edges(Some(&id(1)), Some(&id(1))).len(), 1);
        let two = parent_edges(Some(&id(4)), Some(&id(1)));
        assert_eq!(
            two.iter().map(|e| e.kind).collect::<Vec<_>>(),
            [EdgeKind::CodeParent, EdgeKind::DataParent]
        );
        assert!(parent_edges(None, None).is_empty());
    }

    #[test]
    fn lanes_reuse_slots_and_join_at_shared_parent() {
        let mut lanes = Lanes::default();
        let e = |p: u8| vec![GraphEdge { to: id(p), kind: EdgeKind::BothParents }];
        assert_eq!(lanes.place(&id(9), &e(5)), 0);
        assert_eq!(lanes.place(&id(8), &e(5)), 1); // leaf joining lane 0's target
        assert_eq!(lanes.expecting, [Some(id(5)), None]);
        assert_eq!(lanes.place(&id(5), &e(1)), 0);
        assert_eq!(lanes.place(&id(7), &e(1)), 1);
        assert_eq!(lanes.place(&id(1), &[]), 0);
        assert_eq!(lanes.expecting, [None, None]);
    }
}
