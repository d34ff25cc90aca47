//! Code states, data states, versions, and the consistency rules that tie
//! them together.
//!
//! A version pairs a notebook (cells with their displayed outputs) with a data
//! state (variables plus the ordered list of executed cell snapshots). It is
//! *consistent* when every executed cell shows exactly what replaying the
//! history up to that cell's execution produces.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::{exec_history, CellOutput, Environment};

/// Stable opaque cell identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub String);

impl CellId {
    pub fn new(id: impl Into<String>) -> Self {
        CellId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CellId {
    fn from(s: &str) -> Self {
        CellId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub kind: CellKind,
    pub source: String,
    /// Last displayed output; may be stale when the cell is not executed.
    pub output: String,
    pub error: bool,
    #[serde(rename = "counter")]
    pub exec_counter: Option<u64>,
}

impl Cell {
    pub fn code(id: impl Into<String>, source: impl Into<String>) -> Self {
        Cell {
            id: CellId(id.into()),
            kind: CellKind::Code,
            source: source.into(),
            output: String::new(),
            error: false,
            exec_counter: None,
        }
    }

    pub fn markdown(id: impl Into<String>, source: impl Into<String>) -> Self {
        Cell {
            kind: CellKind::Markdown,
            ..Cell::code(id, source)
        }
    }

    pub fn displayed(&self) -> CellOutput {
        CellOutput {
            text: self.output.clone(),
            error: self.error,
        }
    }
}

/// Ordered notebook cells.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodeState {
    pub cells: Vec<Cell>,
}

impl CodeState {
    pub fn new(cells: Vec<Cell>) -> Self {
        CodeState { cells }
    }

    pub fn get(&self, id: &CellId) -> Option<&Cell> {
        self.cells.iter().find(|c| &c.id == id)
    }

    pub fn get_mut(&mut self, id: &CellId) -> Option<&mut Cell> {
        self.cells.iter_mut().find(|c| &c.id == id)
    }

    pub fn position(&self, id: &CellId) -> Option<usize> {
        self.cells.iter().position(|c| &c.id == id)
    }

    pub fn has_unique_ids(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.cells.iter().all(|c| seen.insert(&c.id))
    }
}

/// One executed cell snapshot; `counter` is its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub cell_id: CellId,
    pub source: String,
    pub counter: u64,
}

impl HistoryEntry {
    fn same_snapshot(&self, other: &HistoryEntry) -> bool {
        self.cell_id == other.cell_id && self.source == other.source
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DataState {
    pub variables: Environment,
    pub history: Vec<HistoryEntry>,
}

impl DataState {
    pub fn sources(&self) -> Vec<&str> {
        self.history.iter().map(|h| h.source.as_str()).collect()
    }

    /// Whether `variables` is exactly what replaying `history` produces.
    pub fn replay_closure_holds(&self) -> bool {
        exec_history(&self.sources()).0 == self.variables
    }

    /// Counters are 1-based positions.
    pub fn counters_are_positional(&self) -> bool {
        self.history
            .iter()
            .enumerate()
            .all(|(i, h)| h.counter == i as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Version {
    pub code: CodeState,
    pub data: DataState,
}

/// Last execution position of every `(cell id, source)` pair in a history.
#[derive(Debug, Default)]
pub struct ExecutedIndex<'a> {
    last: HashMap<(&'a str, &'a str), u64>,
}

impl<'a> ExecutedIndex<'a> {
    pub fn new(history: &'a [HistoryEntry]) -> Self {
        let mut last = HashMap::with_capacity(history.len());
        for h in history {
            last.insert((h.cell_id.as_str(), h.source.as_str()), h.counter);
        }
        ExecutedIndex { last }
    }

    /// Position of the cell's latest execution, if the cell as currently
    /// written is executed. Markdown cells never are.
    pub fn position_of(&self, cell: &Cell) -> Option<u64> {
        if cell.kind != CellKind::Code {
            return None;
        }
        self.last
            .get(&(cell.id.as_str(), cell.source.as_str()))
            .copied()
    }
}

/// Whether `cell` is executed in `data`, and at which position.
///
/// A cell counts as executed only if some history entry has its id *and* its
/// current source; editing a cell makes it non-executed. The position is that
/// of the last matching entry.
pub fn is_executed(cell: &Cell, data: &DataState) -> Option<u64> {
    if cell.kind != CellKind::Code {
        return None;
    }
    data.history
        .iter()
        .rev()
        .find(|h| h.cell_id == cell.id && h.source == cell.source)
        .map(|h| h.counter)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub cell_id: CellId,
    pub position: u64,
    pub expected: CellOutput,
    pub actual: CellOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every executed cell's displayed output against a replay of the
/// history prefix ending at its execution.
pub fn is_consistent(version: &Version) -> ConsistencyReport {
    let index = ExecutedIndex::new(&version.data.history);
    let executed: Vec<(&Cell, u64)> = version
        .code
        .cells
        .iter()
        .filter_map(|c| index.position_of(c).map(|n| (c, n)))
        .collect();
    if executed.is_empty() {
        return ConsistencyReport::default();
    }
    // Replay is prefix-stable, so one pass yields every prefix's last output.
    let (_, outputs) = exec_history(&version.data.sources());
    let violations = executed
        .into_iter()
        .filter_map(|(cell, n)| {
            let expected = outputs
                .get(n as usize - 1)
                .cloned()
                .unwrap_or_default();
            let actual = cell.displayed();
            (expected != actual).then(|| Violation {
                cell_id: cell.id.clone(),
                position: n,
                expected,
                actual,
            })
        })
        .collect();
    ConsistencyReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckoutMode {
    Both,
    #[serde(rename = "data")]
    DataOnly,
    #[serde(rename = "code")]
    CodeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckoutClass {
    SafeBoth,
    SafePastData,
    UnsafeOnlyCode,
    UnsafeFutureData,
    UnsafeUnrelatedData,
}

impl CheckoutClass {
    pub fn is_safe(self) -> bool {
        matches!(self, CheckoutClass::SafeBoth | CheckoutClass::SafePastData)
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckoutClass::SafeBoth => "SafeBoth",
            CheckoutClass::SafePastData => "SafePastData",
            CheckoutClass::UnsafeOnlyCode => "UnsafeOnlyCode",
            CheckoutClass::UnsafeFutureData => "UnsafeFutureData",
            CheckoutClass::UnsafeUnrelatedData => "UnsafeUnrelatedData",
        }
    }

    /// Snake-case code used by the HTTP API.
    pub fn code(self) -> &'static str {
        match self {
            CheckoutClass::SafeBoth => "safe_both",
            CheckoutClass::SafePastData => "safe_past_data",
            CheckoutClass::UnsafeOnlyCode => "unsafe_only_code",
            CheckoutClass::UnsafeFutureData => "unsafe_future_data",
            CheckoutClass::UnsafeUnrelatedData => "unsafe_unrelated_data",
        }
    }

    pub fn explanation(self) -> &'static str {
        match self {
            CheckoutClass::SafeBoth => "code and data come from the same commit",
            CheckoutClass::SafePastData => "the target history is a prefix of the current one",
            CheckoutClass::UnsafeOnlyCode => {
                "cell outputs would not match the variables still in the kernel"
            }
            CheckoutClass::UnsafeFutureData => {
                "the target data includes executions the current code has not seen"
            }
            CheckoutClass::UnsafeUnrelatedData => {
                "the target data comes from an unrelated execution history"
            }
        }
    }
}

impl fmt::Display for CheckoutClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn is_prefix(prefix: &[HistoryEntry], of: &[HistoryEntry]) -> bool {
    prefix.len() <= of.len() && prefix.iter().zip(of).all(|(a, b)| a.same_snapshot(b))
}

/// Classifies a checkout from the head's data history to a target's.
pub fn classify_histories(
    head: &[HistoryEntry],
    target: &[HistoryEntry],
    mode: CheckoutMode,
) -> CheckoutClass {
    match mode {
        CheckoutMode::Both => CheckoutClass::SafeBoth,
        CheckoutMode::CodeOnly => CheckoutClass::UnsafeOnlyCode,
        CheckoutMode::DataOnly if is_prefix(target, head) => CheckoutClass::SafePastData,
        CheckoutMode::DataOnly if is_prefix(head, target) => CheckoutClass::UnsafeFutureData,
        CheckoutMode::DataOnly => CheckoutClass::UnsafeUnrelatedData,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::exec_one;

    fn entry(id: &str, src: &str, counter: u64) -> HistoryEntry {
        HistoryEntry {
            cell_id: id.into(),
            source: src.into(),
            counter,
        }
    }

    fn data(entries: Vec<HistoryEntry>) -> DataState {
        let variables = exec_history(&entries.iter().map(|e| e.source.as_str()).collect::<Vec<_>>()).0;
        DataState {
            variables,
            history: entries,
        }
    }

    #[test]
    fn executed_cell_found() {
        let d = data(vec![entry("a", "x=1", 1)]);
        assert_eq!(is_executed(&Cell::code("a", "x=1"), &d), Some(1));
    }

    #[test]
    fn edited_cell_is_not_executed() {
        let d = data(vec![entry("a", "x=1", 1)]);
        assert_eq!(is_executed(&Cell::code("a", "x=2"), &d), None);
    }

    #[test]
    fn rerun_uses_last_occurrence() {
        let d = data(vec![entry("a", "x=1", 1), entry("b", "y=1", 2), entry("a", "x=1", 3)]);
        assert_eq!(is_executed(&Cell::code("a", "x=1"), &d), Some(3));
        // The executed index agrees with the linear scan.
        assert_eq!(ExecutedIndex::new(&d.history).position_of(&Cell::code("a", "x=1")), Some(3));
        // and the output at step 3 is what a replay of the first 3 gives.
        let (_, outs) = exec_history(&["x=1", "y=1", "x=1"]);
        assert_eq!(outs[2], exec_one(exec_history(&["x=1", "y=1"]).0, "x=1").output);
    }

    #[test]
    fn markdown_never_executed() {
        let d = data(vec![entry("m", "text", 1)]);
        assert_eq!(is_executed(&Cell::markdown("m", "text"), &d), None);
    }

    #[test]
    fn empty_version_is_consistent() {
        assert!(is_consistent(&Version::default()).is_consistent());
    }

    fn executed_cell(id: &str, src: &str, out: &str, counter: u64) -> Cell {
        Cell {
            output: out.into(),
            exec_counter: Some(counter),
            ..Cell::code(id, src)
        }
    }

    /// Code from an early commit combined with data from a later one.
    #[test]
    fn only_code_checkout_scenario_is_inconsistent() {
        // V1: df loaded and shown. V9: a column was dropped afterwards.
        let v1_code = CodeState::new(vec![executed_cell("c1", "df = [1, 2, 3]\ndf", "[1, 2, 3]", 1)]);
        let v9_data = data(vec![
            entry("c1", "df = [1, 2, 3]\ndf", 1),
            entry("c2", "df = [1, 2]", 2),
            entry("c1", "df = [1, 2, 3]\ndf", 3),
        ]);
        let v9_code = CodeState::new(vec![
            executed_cell("c1", "df = [1, 2, 3]\ndf", "[1, 2, 3]", 3),
            executed_cell("c2", "df = [1, 2]", "", 2),
        ]);
        assert!(is_consistent(&Version { code: v9_code, data: v9_data.clone() }).is_consistent());

        // Swap in a code state where c1 shows output from a different history.
        let stale = CodeState::new(vec![executed_cell("c1", "df = [1, 2, 3]\ndf", "[1, 2]", 1)]);
        let report = is_consistent(&Version { code: stale, data: v9_data.clone() });
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].expected.text, "[1, 2, 3]");
        assert_eq!(report.violations[0].position, 3);
        let _ = v1_code;
    }

    #[test]
    fn markdown_edits_do_not_affect_consistency() {
        let d = data(vec![entry("c", "print(1)", 1)]);
        let mut code = CodeState::new(vec![executed_cell("c", "print(1)", "1", 1), Cell::markdown("m", "# a")]);
        assert!(is_consistent(&Version { code: code.clone(), data: d.clone() }).is_consistent());
        code.cells[1].source = "# b".into();
        code.cells[1].output = "junk".into();
        assert!(is_consistent(&Version { code, data: d }).is_consistent());
    }

    #[test]
    fn error_flag_is_part_of_output() {
        let d = data(vec![entry("c", "x", 1)]);
        let mut cell = executed_cell("c", "x", "NameError: x", 1);
        assert!(!is_consistent(&Version { code: CodeState::new(vec![cell.clone()]), data: d.clone() }).is_consistent());
        cell.error = true;
        assert!(is_consistent(&Version { code: CodeState::new(vec![cell]), data: d }).is_consistent());
    }

    #[test]
    fn classification() {
        let h1 = vec![entry("a", "x=1", 1)];
        let h9 = vec![entry("a", "x=1", 1), entry("b", "y=2", 2)];
        let sibling = vec![entry("a", "x=1", 1), entry("c", "y=3", 2)];
        use CheckoutMode::*;
        assert_eq!(classify_histories(&h9, &h1, DataOnly), CheckoutClass::SafePastData);
        assert_eq!(classify_histories(&h9, &h9, DataOnly), CheckoutClass::SafePastData);
        assert_eq!(classify_histories(&h1, &h9, DataOnly), CheckoutClass::UnsafeFutureData);
        assert_eq!(classify_histories(&h9, &sibling, DataOnly), CheckoutClass::UnsafeUnrelatedData);
        assert_eq!(classify_histories(&h9, &sibling, Both), CheckoutClass::SafeBoth);
        assert_eq!(classify_histories(&h9, &h9, CodeOnly), CheckoutClass::UnsafeOnlyCode);
    }

    #[test]
    fn prefix_ignores_counters() {
        let head = vec![entry("a", "x=1", 1)];
        let target = vec![entry("a", "x=1", 7)];
        assert_eq!(classify_histories(&head, &target, CheckoutMode::DataOnly), CheckoutClass::SafePastData);
    }
}
