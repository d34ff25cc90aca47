//! The embedded cell language.
//!
//! A small, closed, deterministic language standing in for a notebook
//! kernel: assignments, `del`, `print`, arithmetic, comparisons, lists and a
//! handful of builtins. No clock, randomness or I/O is reachable from a cell,
//! so replaying an execution history always reproduces the same variables and
//! outputs. The grammar is documented in `docs/cell-language.md`.

mod ast;
mod error;
mod interp;
mod lexer;
mod parser;
mod value;

pub use ast::{BinaryOp, Builtin, Expr, Literal, Program, Stmt, UnaryOp};
pub use error::{KernelError, RuntimeError, RuntimeErrorKind, SyntaxError};
pub use interp::{exec_history, exec_one, CellOutput, ExecResult, MAX_SEQUENCE_LEN};
pub use lexer::is_keyword;
pub use parser::parse;
pub use value::{format_float, is_identifier, Environment, Value};
