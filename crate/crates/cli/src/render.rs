//! Plain-text output.

use statevc_api::views::{GraphPayload, HeadView, VariablePage};
use statevc_core::diff::{CellOp, CommitDiff, LineOp};
use statevc_core::graph::{FoldItem, GraphRow, Label};
use statevc_core::model::{Cell, CellKind, CodeState};
use statevc_core::store::{CommitId, CommitKind, Head, Store};

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("")
}

pub fn executed(commit: &CommitId, cell: &Cell) {
    let counter = cell.exec_counter.map_or("-".to_string(), |n| n.to_string());
    println!("commit {commit}");
    println!("[{counter}] {}", cell.id);
    if !cell.output.is_empty() {
        println!("{}", cell.output);
    }
}

fn labels(labels: &[Label]) -> String {
    let names: Vec<String> = labels
        .iter()
        .map(|l| match l {
            Label::HeadCode => "HEAD:code".to_string(),
            Label::HeadData => "HEAD:data".to_string(),
            Label::Branch { name } => name.clone(),
            Label::Tag { name } => format!("tag: {name}"),
        })
        .collect();
    if names.is_empty() {
        String::new()
    } else {
        format!(" ({})", names.join(", "))
    }
}

fn describe(store: &Store, id: &CommitId) -> String {
    let Ok(c) = store.commit(id) else { return String::new() };
    let what = match (&c.history_tail, c.kind) {
        (Some(t), CommitKind::Auto) => format!("run {}: {}", t.cell_id, first_line(&t.source)),
        _ if c.code_parent.is_none() => "root".to_string(),
        _ => "manual".to_string(),
    };
    match store.message(id) {
        Some(m) => format!("{what}  # {m}"),
        None => what,
    }
}

fn gutter(lane: usize, lanes: usize, mark: char) -> String {
    (0..lanes.max(1))
        .map(|l| if l == lane { mark } else { '|' })
        .flat_map(|c| [c, ' '])
        .collect()
}

fn row(store: &Store, r: &GraphRow, lanes: usize) {
    let merge = if r.edges.len() > 1 { " [2 parents]" } else { "" };
    println!(
        "{}{}{}{} {}",
        gutter(r.lane, lanes, '*'),
        r.commit.short(),
        labels(&r.labels),
        merge,
        describe(store, &r.commit)
    );
}

pub fn log(store: &Store, p: &GraphPayload) {
    for item in &p.items {
        match item {
            FoldItem::Commit(r) => row(store, r, p.lanes),
            FoldItem::Group(g) => {
                let lane = g.rows.first().map_or(0, |r| r.lane);
                let n = g.members.len();
                let s = if n == 1 { "" } else { "s" };
                println!("{}[{n} commit{s} folded: {}]", gutter(lane, p.lanes, '~'), g.group_id);
            }
        }
    }
}

pub fn head_line(h: &HeadView) -> String {
    let branch = h.branch.as_deref().map(|b| format!(" on {b}")).unwrap_or_default();
    if h.split {
        format!("code at {}, data at {}{branch}", h.code.short(), h.data.short())
    } else {
        format!("head at {}{branch}", h.code.short())
    }
}

pub fn status(head: &Head, code: &CodeState) {
    if head.is_split() {
        println!("code head {}\ndata head {}", head.code, head.data);
    } else {
        println!("head {}", head.code);
    }
    for cell in &code.cells {
        let mark = match (cell.kind, cell.exec_counter) {
            (CellKind::Markdown, _) => "md".to_string(),
            (_, Some(n)) => format!("[{n}]"),
            (_, None) => "[ ]".to_string(),
        };
        println!("{mark:>5} {}  {}", cell.id, first_line(&cell.source));
    }
}

pub fn vars(page: &VariablePage) {
    let width = page.variables.iter().map(|v| v.name.len()).max().unwrap_or(0);
    let twidth = page.variables.iter().map(|v| v.type_name.len()).max().unwrap_or(0);
    for v in &page.variables {
        let more = if v.truncated { "..." } else { "" };
        println!("{:width$}  {:twidth$}  {}{more}", v.name, v.type_name, v.repr);
    }
}

fn list(title: &str, names: &std::collections::BTreeSet<String>) {
    if !names.is_empty() {
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        println!("{title}: {}", names.join(", "));
    }
}

pub fn diff(d: &CommitDiff) {
    println!("--- {}\n+++ {}", d.a, d.b);
    for op in &d.code.cells {
        match op {
            CellOp::Kept { cell } => println!("  cell {}", cell.id),
            CellOp::Added { cell } => {
                println!("+ cell {}", cell.id);
                for l in cell.source.lines() {
                    println!("+ {l}");
                }
            }
            CellOp::Deleted { cell } => {
                println!("- cell {}", cell.id);
                for l in cell.source.lines() {
                    println!("- {l}");
                }
            }
            CellOp::Modified { cell_id, lines, .. } => {
                println!("~ cell {cell_id}");
                for l in lines {
                    match l {
                        LineOp::Keep(t) => println!("  {t}"),
                        LineOp::Insert(t) => println!("+ {t}"),
                        LineOp::Delete(t) => println!("- {t}"),
                    }
                }
            }
        }
    }
    let v = &d.variables;
    list("changed", &v.changed);
    list("added", &v.added_right);
    list("deleted", &v.deleted_right);
    list("unchanged", &v.unchanged);
}
