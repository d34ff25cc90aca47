//! `statevc`: drive a versioned notebook store from the shell.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use statevc_api::views::{self, VariableQuery};
use statevc_api::{ApiConfig, AppState, DEFAULT_PORT};
use statevc_core::diff::diff_commits;
use statevc_core::model::{CellId, CellKind, CheckoutMode, CodeState};
use statevc_core::notebook;
use statevc_core::search::SearchQuery;
use statevc_core::session::{Placement, Session, SessionError};
use statevc_core::store::{CommitId, Store, StoreError, StoreOptions};

mod render;

#[derive(Parser)]
#[command(name = "statevc", version, about = "Version control for notebook code and data")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "STATEVC_STORE", default_value = ".statevc")]
    store: PathBuf,
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a store with an empty root commit.
    Init,
    /// Execute a cell and commit the result.
    ///
    /// With a file or `-- source`, a new code cell is appended and run. With
    /// `--cell`, that cell is run, after replacing its source if one is given.
    Run {
        /// File holding the cell source.
        file: Option<PathBuf>,
        #[arg(long)]
        cell: Option<String>,
        /// Inline source, after `--`.
        #[arg(last = true)]
        source: Vec<String>,
    },
    /// Show the commit graph, newest first.
    Log {
        /// Collapse runs of unannotated single-child commits.
        #[arg(long)]
        fold: bool,
    },
    /// Check out a commit's code and data, or only its data.
    Checkout {
        commit: String,
        /// Roll back the data only; refused unless safe.
        #[arg(long)]
        data_only: bool,
    },
    /// Attach a tag (and optionally a message) to a commit.
    Tag {
        commit: String,
        name: String,
        #[arg(short, long)]
        message: Option<String>,
    },
    /// Find commits, e.g. `var:model tag:v1 "fit"`.
    Search {
        #[arg(required = true, num_args = 1..)]
        query: Vec<String>,
    },
    /// Compare the code and variables of two commits.
    Diff { a: String, b: String },
    /// List the variables of a commit (default: the live data head).
    Vars {
        commit: Option<String>,
        /// Names containing this text are listed first.
        #[arg(long)]
        filter: Option<String>,
        /// Byte cap for printed values.
        #[arg(long, default_value_t = views::DEFAULT_REPR_CAP)]
        repr_cap: usize,
    },
    /// Show the head and the working notebook.
    Status,
    /// Write the working notebook as JSON (`-` for stdout).
    Export { path: PathBuf },
    /// Serve the HTTP API on localhost.
    Serve {
        #[arg(long, env = "STATEVC_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

const USAGE: u8 = 1;
const STORE: u8 = 2;
const REJECTED: u8 = 3;
const UNKNOWN_ID: u8 = 4;

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: USAGE, message: message.into() }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Failure {
        let code = match e {
            StoreError::UnknownCommit(_) | StoreError::AmbiguousCommit(_) => UNKNOWN_ID,
            _ => STORE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Failure {
        match e {
            SessionError::Store(e) => e.into(),
            // Only the class name, so scripts can match on it.
            SessionError::Rejected(class) => Failure { code: REJECTED, message: class.name().into() },
            SessionError::UnknownCell(_) => Failure { code: UNKNOWN_ID, message: e.to_string() },
            SessionError::NotCodeCell(_) | SessionError::InvalidIndex(_) => Failure::usage(e.to_string()),
            SessionError::EmptyStore => Failure { code: STORE, message: e.to_string() },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure { code: STORE, message: e.to_string() }
    }
}

type Result<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn writer(dir: &Path) -> Result<Session> {
    Ok(Session::start(Store::open(dir, StoreOptions::default())?)?)
}

fn reader(dir: &Path) -> Result<Store> {
    Ok(Store::open_read_only(dir)?)
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("payloads serialize");
    println!("{text}");
}

fn resolve(store: &Store, text: &str) -> Result<CommitId> {
    Ok(store.resolve(text)?)
}

/// The notebook the live session would show.
fn working_notebook(store: &Store) -> Result<CodeState> {
    match store.load_notebook()? {
        Some(code) => Ok(code),
        None => {
            let head = store.head().ok_or_else(|| Failure { code: STORE, message: "store has no HEAD".into() })?;
            Ok(store.commit(&head.code)?.code.clone())
        }
    }
}

fn run(cli: Cli) -> Result {
    let dir = cli.store.as_path();
    match cli.command {
        Command::Init => {
            let s = Session::start(Store::init(dir, StoreOptions::default())?)?;
            let root = s.head().code.clone();
            if cli.json {
                print_json(&views::head(&s));
            } else {
                println!("initialized {} with root {}", dir.display(), root);
            }
        }
        Command::Run { file, cell, source } => {
            let text = match (file, source.is_empty()) {
                (Some(_), false) => return Err(Failure::usage("give a file or inline source, not both")),
                (Some(path), true) => Some(fs::read_to_string(&path)?),
                (None, false) => Some(source.join(" ")),
                (None, true) => None,
            };
            let mut s = writer(dir)?;
            let id = match (cell, text) {
                (Some(id), text) => {
                    let id = CellId::new(id);
                    if let Some(text) = text {
                        s.edit_cell(&id, &text)?;
                    }
                    id
                }
                (None, Some(text)) => s.add_cell(CellKind::Code, &text, Placement::End)?,
                (None, None) => return Err(Failure::usage("nothing to run: give a file, `-- source` or --cell")),
            };
            let commit = s.execute_cell(&id)?;
            let cell = s.notebook().get(&id).expect("executed cell exists").clone();
            if cli.json {
                print_json(&views::ExecuteResult { commit, cell, head: views::head(&s) });
            } else {
                render::executed(&commit, &cell);
            }
        }
        Command::Log { fold } => {
            let store = reader(dir)?;
            let payload = views::graph(&store, store.head(), fold);
            if cli.json {
                print_json(&payload);
            } else {
                render::log(&store, &payload);
            }
        }
        Command::Checkout { commit, data_only } => {
            let mut s = writer(dir)?;
            let target = resolve(s.store(), &commit)?;
            let mode = if data_only { CheckoutMode::DataOnly } else { CheckoutMode::Both };
            let class = s.checkout(&target, mode)?;
            if cli.json {
                print_json(&views::CheckoutResult { checkout_class: class, head: views::head(&s) });
            } else {
                println!("{class}: {}", render::head_line(&views::head(&s)));
            }
        }
        Command::Tag { commit, name, message } => {
            let mut s = writer(dir)?;
            let id = resolve(s.store(), &commit)?;
            s.annotate(&id, Some(name), message)?;
            if cli.json {
                print_json(&views::commit(s.store(), &id)?);
            } else {
                println!("tagged {}", id.short());
            }
        }
        Command::Search { query } => {
            let q = SearchQuery::parse(&query.join(" ")).map_err(|e| Failure::usage(e.to_string()))?;
            let store = reader(dir)?;
            let payload = views::search_payload(&store, &q);
            if cli.json {
                print_json(&payload);
            } else {
                for id in &payload.commits {
                    println!("{id}");
                }
            }
        }
        Command::Diff { a, b } => {
            let store = reader(dir)?;
            let d = diff_commits(&store, &resolve(&store, &a)?, &resolve(&store, &b)?)?;
            if cli.json {
                print_json(&d);
            } else {
                render::diff(&d);
            }
        }
        Command::Vars { commit, filter, repr_cap } => {
            let store = reader(dir)?;
            let id = match commit {
                Some(text) => resolve(&store, &text)?,
                None => store.head().map(|h| h.data.clone()).ok_or_else(|| Failure { code: STORE, message: "store has no HEAD".into() })?,
            };
            let q = VariableQuery { page_size: views::MAX_PAGE_SIZE, filter, repr_cap, page: 0 };
            let page = all_variables(&store, &id, q)?;
            if cli.json {
                print_json(&page);
            } else {
                render::vars(&page);
            }
        }
        Command::Status => {
            let store = reader(dir)?;
            let head = store.head().cloned().ok_or_else(|| Failure { code: STORE, message: "store has no HEAD".into() })?;
            let code = working_notebook(&store)?;
            if cli.json {
                print_json(&serde_json::json!({ "head": head, "split": head.is_split(), "cells": code.cells }));
            } else {
                render::status(&head, &code);
            }
        }
        Command::Export { path } => {
            let store = reader(dir)?;
            let text = notebook::export(&working_notebook(&store)?);
            if path.as_os_str() == "-" {
                std::io::stdout().write_all(text.as_bytes())?;
            } else {
                fs::write(&path, text)?;
            }
        }
        Command::Serve { port } => {
            let session = writer(dir)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
                println!("listening on http://{}", listener.local_addr()?);
                std::io::stdout().flush()?;
                statevc_api::serve(AppState::new(session, ApiConfig::default()), listener).await
            })?;
        }
    }
    Ok(())
}

/// One page holding every variable.
fn all_variables(store: &Store, id: &CommitId, q: VariableQuery) -> Result<views::VariablePage> {
    let mut page = views::variables(store, id, &q)?;
    let mut next = 1;
    while page.variables.len() < page.total {
        let more = views::variables(store, id, &VariableQuery { page: next, ..q.clone() })?;
        page.variables.extend(more.variables);
        next += 1;
    }
    page.page_size = page.total;
    Ok(page)
}
