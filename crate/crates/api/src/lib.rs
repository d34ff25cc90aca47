//! Local HTTP interface over one notebook session.
//!
//! Reads take a shared lock on the session; mutations take the exclusive
//! lock, so they are serialized and a reader never sees a half-applied
//! operation. Every successful mutation bumps the event counter that
//! `GET /events` long-polls on.

use std::collections::HashMap;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::watch;

use statevc_core::model::{CellId, CellKind, CheckoutMode};
use statevc_core::search::SearchQuery;
use statevc_core::session::{Placement, Session};
use statevc_core::store::CommitId;

mod error;
pub mod views;

pub use error::{ApiError, ERROR_CODES};
use views::*;

pub const DEFAULT_PORT: u16 = 8757;
const MAX_POLL: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy)]
pub struct ApiConfig {
    /// Byte cap for variable reprs.
    pub repr_cap: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            repr_cap: DEFAULT_REPR_CAP,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    session: Arc<RwLock<Session>>,
    events: Arc<watch::Sender<u64>>,
    config: ApiConfig,
}

impl AppState {
    pub fn new(session: Session, config: ApiConfig) -> AppState {
        AppState {
            session: Arc::new(RwLock::new(session)),
            events: Arc::new(watch::channel(0).0),
            config,
        }
    }

    fn read(&self) -> RwLockReadGuard<'_, Session> {
        self.session.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Session> {
        self.session.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs a mutation under the write lock; announces it when it succeeds.
    fn mutate<T>(&self, op: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let out = op(&mut self.write())?;
        self.events.send_modify(|n| *n += 1);
        Ok(out)
    }

    pub fn event_count(&self) -> u64 {
        *self.events.borrow()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/graph", get(get_graph))
        .route("/commit/{id}", get(get_commit))
        .route("/commit/{id}/variables", get(get_variables))
        .route("/search", get(get_search))
        .route("/diff", get(get_diff))
        .route("/head", get(get_head))
        .route("/notebook", get(get_notebook))
        .route("/events", get(get_events))
        .route("/execute", post(post_execute))
        .route("/cells", post(post_cells))
        .route("/checkout", post(post_checkout))
        .route("/tag", post(post_tag))
        .with_state(state)
}

/// Serves on an already bound listener until the process stops.
pub async fn serve(state: AppState, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

type Params = Query<HashMap<String, String>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn number(params: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::bad_request(format!("'{key}' must be a non-negative integer"))),
    }
}

fn flag(params: &HashMap<String, String>, key: &str) -> Result<bool, ApiError> {
    match params.get(key).map(String::as_str) {
        None | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") | Some("") => Ok(true),
        Some(v) => Err(ApiError::bad_request(format!("'{key}' must be true or false, got '{v}'"))),
    }
}

fn required<'a>(params: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    params
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad_request(format!("missing parameter '{key}'")))
}

fn resolve(s: &Session, text: &str) -> Result<CommitId, ApiError> {
    Ok(s.store().resolve(text)?)
}

async fn get_graph(State(st): State<AppState>, Query(p): Params) -> ApiResult<GraphPayload> {
    let folded = flag(&p, "fold")?;
    let s = st.read();
    Ok(Json(graph(s.store(), Some(s.head()), folded)))
}

async fn get_commit(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<CommitView> {
    let s = st.read();
    let id = resolve(&s, &id)?;
    Ok(Json(commit(s.store(), &id)?))
}

async fn get_variables(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<VariablePage> {
    let q = VariableQuery {
        page: number(&p, "page", 0)?,
        page_size: number(&p, "page_size", DEFAULT_PAGE_SIZE)?,
        filter: p.get("filter").cloned(),
        repr_cap: st.config.repr_cap,
    };
    let s = st.read();
    let id = resolve(&s, &id)?;
    Ok(Json(variables(s.store(), &id, &q)?))
}

async fn get_search(State(st): State<AppState>, Query(p): Params) -> ApiResult<SearchPayload> {
    let q = SearchQuery::parse(p.get("q").map(String::as_str).unwrap_or(""))?;
    let s = st.read();
    Ok(Json(search_payload(s.store(), &q)))
}

async fn get_diff(
    State(st): State<AppState>,
    Query(p): Params,
) -> ApiResult<statevc_core::diff::CommitDiff> {
    let s = st.read();
    let a = resolve(&s, required(&p, "a")?)?;
    let b = resolve(&s, required(&p, "b")?)?;
    Ok(Json(statevc_core::diff::diff_commits(s.store(), &a, &b)?))
}

async fn get_head(State(st): State<AppState>) -> Json<HeadView> {
    Json(head(&st.read()))
}

async fn get_notebook(State(st): State<AppState>) -> Json<NotebookView> {
    Json(notebook(&st.read()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventsPayload {
    /// Number of mutations applied since the server started.
    pub version: u64,
    pub changed: bool,
}

/// Returns as soon as the event counter exceeds `since`, or after
/// `timeout_ms` (default 25 s) with `changed: false`.
async fn get_events(State(st): State<AppState>, Query(p): Params) -> ApiResult<EventsPayload> {
    let since = number(&p, "since", 0)? as u64;
    let timeout = Duration::from_millis(number(&p, "timeout_ms", 25_000)? as u64).min(MAX_POLL);
    let mut rx = st.events.subscribe();
    let changed = tokio::time::timeout(timeout, rx.wait_for(|v| *v > since))
        .await
        .is_ok_and(|r| r.is_ok());
    let version = *rx.borrow();
    Ok(Json(EventsPayload { version, changed }))
}

#[derive(Debug, Deserialize)]
struct ExecuteRequest {
    cell_id: CellId,
}

async fn post_execute(State(st): State<AppState>, raw: Bytes) -> ApiResult<ExecuteResult> {
    let req: ExecuteRequest = body(&raw)?;
    st.mutate(|s| {
        let commit = s.execute_cell(&req.cell_id)?;
        let cell = s.notebook().get(&req.cell_id).expect("executed cell exists").clone();
        Ok(Json(ExecuteResult {
            commit,
            cell,
            head: head(s),
        }))
    })
}

/// Notebook edits. None of them creates a commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum CellEdit {
    Add {
        kind: CellKind,
        #[serde(default)]
        source: String,
        /// Insert position; appended when absent.
        index: Option<usize>,
    },
    Edit {
        cell_id: CellId,
        source: String,
    },
    Delete {
        cell_id: CellId,
    },
    Move {
        cell_id: CellId,
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellEditResult {
    pub cell_id: CellId,
    pub notebook: NotebookView,
}

async fn post_cells(State(st): State<AppState>, raw: Bytes) -> ApiResult<CellEditResult> {
    let edit: CellEdit = body(&raw)?;
    st.mutate(|s| {
        let cell_id = match edit {
            CellEdit::Add { kind, source, index } => {
                let at = index.map_or(Placement::End, Placement::Index);
                s.add_cell(kind, &source, at)?
            }
            CellEdit::Edit { cell_id, source } => {
                s.edit_cell(&cell_id, &source)?;
                cell_id
            }
            CellEdit::Delete { cell_id } => {
                s.delete_cell(&cell_id)?;
                cell_id
            }
            CellEdit::Move { cell_id, index } => {
                s.move_cell(&cell_id, index)?;
                cell_id
            }
        };
        Ok(Json(CellEditResult {
            cell_id,
            notebook: notebook(s),
        }))
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckoutRequest {
    commit: String,
    mode: CheckoutMode,
}

async fn post_checkout(State(st): State<AppState>, raw: Bytes) -> ApiResult<CheckoutResult> {
    let req: CheckoutRequest = body(&raw)?;
    st.mutate(|s| {
        let target = resolve(s, &req.commit)?;
        let class = s.checkout(&target, req.mode)?;
        Ok(Json(CheckoutResult {
            checkout_class: class,
            head: head(s),
        }))
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagRequest {
    commit: String,
    tag: Option<String>,
    message: Option<String>,
}

async fn post_tag(State(st): State<AppState>, raw: Bytes) -> ApiResult<CommitView> {
    let req: TagRequest = body(&raw)?;
    if req.tag.is_none() && req.message.is_none() {
        return Err(ApiError::bad_request("give a tag, a message, or both"));
    }
    st.mutate(|s| {
        let id = resolve(s, &req.commit)?;
        s.annotate(&id, req.tag, req.message)?;
        Ok(Json(commit(s.store(), &id)?))
    })
}
