//! Notebook working-copy text format: a JSON array of cells.
//!
//! ```json
//! [
//!   {"id": "c1", "kind": "code", "source": "x = 1", "output": "", "error": false, "counter": 1},
//!   {"id": "c2", "kind": "markdown", "source": "# notes", "output": "", "error": false, "counter": null}
//! ]
//! ```

use std::fmt;

use crate::model::{CellKind, CodeState};

#[derive(Debug)]
pub enum ImportError {
    Json(serde_json::Error),
    DuplicateId(String),
    MarkdownCounter(String),
}

impl fmt::Display for ImportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImportError::Json(e) => write!(f, "{e}"),
            ImportError::DuplicateId(id) => write!(f, "duplicate cell id {id}"),
            ImportError::MarkdownCounter(id) => {
                write!(f, "markdown cell {id} carries an execution counter")
            }
        }
    }
}

impl std::error::Error for ImportError {}

pub fn export(code: &CodeState) -> String {
    let mut text = serde_json::to_string_pretty(code).expect("cells serialize");
    text.push('\n');
    text
}

pub fn import(text: &str) -> Result<CodeState, ImportError> {
    let code: CodeState = serde_json::from_str(text).map_err(ImportError::Json)?;
    let mut seen = std::collections::HashSet::new();
    for cell in &code.cells {
        if !seen.insert(&cell.id) {
            return Err(ImportError::DuplicateId(cell.id.to_string()));
        }
        if cell.kind == CellKind::Markdown && cell.exec_counter.is_some() {
            return Err(ImportError::MarkdownCounter(cell.id.to_string()));
        }
    }
    Ok(code)
}
