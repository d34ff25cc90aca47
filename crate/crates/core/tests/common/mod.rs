//! Seeded random session traces shared by the integration suites.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use statevc_core::kernel::{exec_history, Environment};
use statevc_core::model::{CellKind, CodeState, DataState, Version};
use statevc_core::session::{Placement, Session};
use statevc_core::store::{CommitId, Store};

const VARS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn expr(rng: &mut ChaCha8Rng) -> String {
    let v = VARS.choose(rng).unwrap();
    let k: i64 = rng.gen_range(-3..10);
    match rng.gen_range(0..11) {
        0 => k.to_string(),
        1 => v.to_string(),
        2 => format!("{v} + {k}"),
        3 => format!("{v} * 2"),
        4 => format!("[{v}, {k}]"),
        5 => format!("len([{k}, {v}])"),
        6 => format!("{v} / {}", rng.gen_range(0..3)),
        7 => format!("str({v})"),
        8 => format!("{v} % 3"),
        9 => format!("{k}.5"),
        _ => format!("\"s{k}\""),
    }
}

fn statement(rng: &mut ChaCha8Rng) -> String {
    let v = VARS.choose(rng).unwrap();
    match rng.gen_range(0..10) {
        0..=4 => format!("{v} = {}", expr(rng)),
        5 | 6 => format!("print({})", expr(rng)),
        7 | 8 => expr(rng),
        _ => format!("del {v}"),
    }
}

/// A random cell source of one to three statements.
pub fn source(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=3);
    let stmts: Vec<String> = (0..n).map(|_| statement(rng)).collect();
    let sep = if rng.gen_bool(0.5) { "\n" } else { "; " };
    stmts.join(sep)
}

pub fn new_session() -> Session {
    let mut s = Session::start(Store::in_memory()).unwrap();
    s.set_clock(|| 0);
    s
}

/// Data-parent ancestors of `id`, including itself.
pub fn data_chain(store: &Store, id: &CommitId) -> Vec<CommitId> {
    let mut out = Vec::new();
    let mut cur = Some(id.clone());
    while let Some(c) = cur {
        cur = store.commit(&c).unwrap().data_parent.clone();
        out.push(c);
    }
    out
}

fn code_cells(s: &Session) -> Vec<statevc_core::model::CellId> {
    s.notebook()
        .cells
        .iter()
        .filter(|c| c.kind == CellKind::Code)
        .map(|c| c.id.clone())
        .collect()
}

fn any_commit(s: &Session, rng: &mut ChaCha8Rng) -> CommitId {
    let all: Vec<CommitId> = s.store().commits().map(|c| c.id.clone()).collect();
    all.choose(rng).unwrap().clone()
}

/// One random operation. Rejected rollbacks are part of the trace.
pub fn step(s: &mut Session, rng: &mut ChaCha8Rng, target_cells: usize, created: &mut usize) {
    let cells = code_cells(s);
    let all_cells: Vec<_> = s.notebook().cells.iter().map(|c| c.id.clone()).collect();
    let roll = rng.gen_range(0..100);
    match roll {
        _ if cells.is_empty() || (*created < target_cells && roll < 25) => {
            let at = if rng.gen_bool(0.3) && !all_cells.is_empty() {
                Placement::Index(rng.gen_range(0..=all_cells.len()))
            } else {
                Placement::End
            };
            let kind = if rng.gen_bool(0.1) { CellKind::Markdown } else { CellKind::Code };
            s.add_cell(kind, &source(rng), at).unwrap();
            *created += 1;
        }
        0..=44 => {
            let c = cells.choose(rng).unwrap();
            s.execute_cell(c).unwrap();
        }
        45..=59 => {
            let c = cells.choose(rng).unwrap();
            // Sometimes restore an earlier source of the same cell.
            let old: Vec<String> = s
                .history()
                .iter()
                .filter(|h| &h.cell_id == c)
                .map(|h| h.source.clone())
                .collect();
            let src = if !old.is_empty() && rng.gen_bool(0.3) {
                old.choose(rng).unwrap().clone()
            } else {
                source(rng)
            };
            s.edit_cell(c, &src).unwrap();
        }
        60..=64 => {
            let message = rng.gen_bool(0.5).then(|| format!("note {}", rng.gen_range(0..20)));
            let tag = rng.gen_bool(0.3).then(|| format!("v{}", rng.gen_range(0..50)));
            s.commit_manual(message, tag).unwrap();
        }
        65..=71 => {
            let t = any_commit(s, rng);
            s.checkout_both(&t).unwrap();
        }
        72..=85 => {
            let t = if rng.gen_bool(0.6) {
                data_chain(s.store(), &s.head().data.clone()).choose(rng).unwrap().clone()
            } else {
                any_commit(s, rng)
            };
            let _ = s.rollback_data(&t);
        }
        86..=89 => {
            let c = all_cells.choose(rng).unwrap();
            s.delete_cell(c).unwrap();
        }
        90..=94 => {
            let c = all_cells.choose(rng).unwrap();
            s.move_cell(c, rng.gen_range(0..all_cells.len())).unwrap();
        }
        _ => {
            let t = any_commit(s, rng);
            let tag = format!("t{}", rng.gen_range(0..30));
            s.annotate(&t, Some(tag), None).unwrap();
        }
    }
}

/// Runs a full trace: picks 5–30 cells and about three operations per cell.
/// `after` sees the session after every operation.
pub fn run_trace(seed: u64, mut after: impl FnMut(&Session)) -> Session {
    let mut rng = rng(seed);
    let mut s = new_session();
    let target_cells = rng.gen_range(5..=30);
    let ops = target_cells * 3 + 5;
    let mut created = 0;
    for _ in 0..ops {
        step(&mut s, &mut rng, target_cells, &mut created);
        after(&s);
    }
    s
}

/// The version stored in a commit, rebuilt through the store.
pub fn stored_version(store: &Store, id: &CommitId) -> Version {
    Version {
        code: store.commit(id).unwrap().code.clone(),
        data: DataState {
            variables: store.materialize_variables(id).unwrap(),
            history: store.history_at(id).unwrap(),
        },
    }
}

/// Replays a commit's history from scratch.
pub fn replayed_env(store: &Store, id: &CommitId) -> Environment {
    let h = store.history_at(id).unwrap();
    let sources: Vec<&str> = h.iter().map(|e| e.source.as_str()).collect();
    exec_history(&sources).0
}

pub fn empty_code() -> CodeState {
    CodeState::default()
}
