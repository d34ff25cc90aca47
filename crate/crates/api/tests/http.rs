use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use statevc_api::{router, ApiConfig, AppState, ERROR_CODES};
use statevc_core::session::Session;
use statevc_core::store::Store;

struct Client {
    state: AppState,
}

impl Client {
    fn new() -> Client {
        let mut s = Session::start(Store::in_memory()).unwrap();
        s.set_clock(|| 1);
        Client {
            state: AppState::new(s, ApiConfig::default()),
        }
    }

    async fn send(&self, req: Request<Body>) -> (StatusCode, Value) {
        let res = router(self.state.clone()).oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let req = Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send(req).await
    }

    async fn ok_get(&self, uri: &str) -> Value {
        let (status, v) = self.get(uri).await;
        assert_eq!(status, StatusCode::OK, "{uri}: {v}");
        v
    }

    async fn ok_post(&self, uri: &str, body: Value) -> Value {
        let (status, v) = self.post(uri, body).await;
        assert_eq!(status, StatusCode::OK, "{uri}: {v}");
        v
    }

    async fn add(&self, source: &str) -> String {
        let v = self.ok_post("/cells", json!({"op": "add", "kind": "code", "source": source})).await;
        v["cell_id"].as_str().unwrap().to_string()
    }

    async fn exec(&self, cell: &str) -> String {
        let v = self.ok_post("/execute", json!({"cell_id": cell})).await;
        v["commit"].as_str().unwrap().to_string()
    }

    /// Every read endpoint, for atomicity checks.
    async fn observe(&self, ids: &[&str]) -> Vec<Value> {
        let mut out = vec![
            self.ok_get("/graph?fold=true").await,
            self.ok_get("/graph").await,
            self.ok_get("/head").await,
            self.ok_get("/notebook").await,
        ];
        for id in ids {
            out.push(self.ok_get(&format!("/commit/{id}")).await);
            out.push(self.ok_get(&format!("/commit/{id}/variables")).await);
        }
        out
    }
}

fn assert_error(status: StatusCode, v: &Value, want_status: StatusCode, code: &str) {
    assert_eq!(status, want_status, "{v}");
    assert_eq!(v["code"], code);
    assert!(ERROR_CODES.contains(&code));
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn execute_then_head_is_unified() {
    let c = Client::new();
    let cell = c.add("x = 1\nx").await;
    let commit = c.exec(&cell).await;
    let head = c.ok_get("/head").await;
    assert_eq!(head["code"], commit.as_str());
    assert_eq!(head["data"], commit.as_str());
    assert_eq!(head["split"], false);
    assert_eq!(head["branch"], "main");
    let nb = c.ok_get("/notebook").await;
    assert_eq!(nb["cells"][0]["output"], "1");
    assert_eq!(nb["cells"][0]["counter"], 1);
    assert_eq!(nb["consistent"], true);
}

#[tokio::test]
async fn rollback_splits_head_and_rewinds_counters() {
    let c = Client::new();
    let a = c.add("a = 1").await;
    let b = c.add("b = a + 1").await;
    let v1 = c.exec(&a).await;
    let v2 = c.exec(&b).await;
    let r = c.ok_post("/checkout", json!({"commit": v1, "mode": "data"})).await;
    assert_eq!(r["checkout_class"], "SafePastData");
    let head = c.ok_get("/head").await;
    assert_eq!((head["code"].as_str(), head["data"].as_str()), (Some(v2.as_str()), Some(v1.as_str())));
    assert_eq!(head["split"], true);
    let nb = c.ok_get("/notebook").await;
    assert_eq!(nb["cells"][1]["counter"], Value::Null);
    assert_eq!(nb["cells"][0]["counter"], 1);

    let graph = c.ok_get("/graph").await;
    let labels: Vec<(String, String)> = graph["rows"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| {
            r["labels"].as_array().unwrap().iter().map(move |l| {
                (r["commit"].as_str().unwrap().to_string(), l["kind"].as_str().unwrap().to_string())
            })
        })
        .filter(|(_, k)| k.starts_with("head"))
        .collect();
    assert_eq!(labels, [(v2.clone(), "head_code".into()), (v1.clone(), "head_data".into())]);

    // Executing from the split head records both parents.
    let v3 = c.exec(&b).await;
    let commit = c.ok_get(&format!("/commit/{v3}")).await;
    assert_eq!((commit["code_parent"].as_str(), commit["data_parent"].as_str()), (Some(v2.as_str()), Some(v1.as_str())));
    let graph = c.ok_get("/graph").await;
    let row = graph["rows"].as_array().unwrap().iter().find(|r| r["commit"] == v3.as_str()).unwrap();
    let kinds: Vec<_> = row["edges"].as_array().unwrap().iter().map(|e| e["kind"].clone()).collect();
    assert_eq!(kinds, [json!("code_parent"), json!("data_parent")]);
}

#[tokio::test]
async fn sibling_data_checkout_is_a_conflict_and_changes_nothing() {
    let c = Client::new();
    let a = c.add("a = 1").await;
    let base = c.exec(&a).await;
    c.ok_post("/cells", json!({"op": "edit", "cell_id": a, "source": "a = 2"})).await;
    let left = c.exec(&a).await;
    c.ok_post("/checkout", json!({"commit": base, "mode": "both"})).await;
    c.ok_post("/cells", json!({"op": "edit", "cell_id": a, "source": "a = 3"})).await;
    let right = c.exec(&a).await;

    let before = c.observe(&[&base, &left, &right]).await;
    let events = c.state.event_count();
    let (status, v) = c.post("/checkout", json!({"commit": left, "mode": "data"})).await;
    assert_error(status, &v, StatusCode::CONFLICT, "unsafe_unrelated_data");
    assert_eq!(v["checkout_class"], "UnsafeUnrelatedData");
    let (status, v) = c.post("/checkout", json!({"commit": left, "mode": "code"})).await;
    assert_error(status, &v, StatusCode::CONFLICT, "unsafe_only_code");
    assert_eq!(c.observe(&[&base, &left, &right]).await, before);
    assert_eq!(c.state.event_count(), events);

    c.ok_post("/checkout", json!({"commit": base, "mode": "data"})).await;
    let (status, v) = c.post("/checkout", json!({"commit": right, "mode": "data"})).await;
    assert_error(status, &v, StatusCode::CONFLICT, "unsafe_future_data");
}

#[tokio::test]
async fn failed_mutations_are_atomic() {
    let c = Client::new();
    let a = c.add("a = 1").await;
    let v1 = c.exec(&a).await;
    let before = c.observe(&[&v1]).await;
    let attempts = [
        ("/execute", json!({"cell_id": "c99"}), StatusCode::NOT_FOUND, "unknown_cell"),
        ("/execute", json!({"cell": "c1"}), StatusCode::BAD_REQUEST, "bad_request"),
        ("/cells", json!({"op": "move", "cell_id": a, "index": 5}), StatusCode::BAD_REQUEST, "invalid_index"),
        ("/cells", json!({"op": "rename", "cell_id": a}), StatusCode::BAD_REQUEST, "bad_request"),
        ("/checkout", json!({"commit": "ffffffff", "mode": "both"}), StatusCode::NOT_FOUND, "unknown_commit"),
        ("/checkout", json!({"commit": v1, "mode": "sideways"}), StatusCode::BAD_REQUEST, "bad_request"),
        ("/tag", json!({"commit": v1}), StatusCode::BAD_REQUEST, "bad_request"),
        ("/tag", json!({"commit": "zz", "tag": "t"}), StatusCode::NOT_FOUND, "unknown_commit"),
    ];
    for (uri, body, status, code) in attempts {
        let (s, v) = c.post(uri, body).await;
        assert_error(s, &v, status, code);
        assert_eq!(c.observe(&[&v1]).await, before, "{uri} changed state");
    }
    let md = c.ok_post("/cells", json!({"op": "add", "kind": "markdown", "source": "# hi"})).await;
    let (s, v) = c.post("/execute", json!({"cell_id": md["cell_id"]})).await;
    assert_error(s, &v, StatusCode::BAD_REQUEST, "not_code_cell");
}

#[tokio::test]
async fn commit_and_variables_views() {
    let c = Client::new();
    let root = c.ok_get("/head").await["code"].as_str().unwrap().to_string();
    let vars = c.ok_get(&format!("/commit/{root}/variables")).await;
    assert_eq!(vars["total"], 0);

    let a = c.add("xs = range(300); total = 3; n = 'x'").await;
    let v1 = c.exec(&a).await;
    let view = c.ok_get(&format!("/commit/{}", &v1[..10])).await;
    assert_eq!(view["id"], v1.as_str());
    assert_eq!(view["kind"], "auto");
    assert_eq!(view["changed_variables"], json!(["n", "total", "xs"]));
    assert_eq!(view["cells"][0]["counter"], 1);

    let vars = c.ok_get(&format!("/commit/{v1}/variables?filter=TO&page_size=2")).await;
    assert_eq!((vars["total"].clone(), vars["matched"].clone()), (json!(3), json!(1)));
    let names: Vec<_> = vars["variables"].as_array().unwrap().iter().map(|v| v["name"].clone()).collect();
    assert_eq!(names, [json!("total"), json!("n")]);
    let page = c.ok_get(&format!("/commit/{v1}/variables?page=1&page_size=2")).await;
    let xs = &page["variables"][0];
    assert_eq!((xs["name"].clone(), xs["type"].clone(), xs["truncated"].clone()), (json!("xs"), json!("list"), json!(true)));
    assert_eq!(xs["repr"].as_str().unwrap().len(), 256);
    assert_eq!(xs["changed_in"], v1.as_str());

    let (s, v) = c.get(&format!("/commit/{v1}/variables?page=x")).await;
    assert_error(s, &v, StatusCode::BAD_REQUEST, "bad_request");
    let (s, v) = c.get("/commit/0123456789/variables").await;
    assert_error(s, &v, StatusCode::NOT_FOUND, "unknown_commit");
}

#[tokio::test]
async fn search_diff_and_tags() {
    let c = Client::new();
    let cells = [
        c.add("data_df = 'd'").await,
        c.add("model = 'm'").await,
        c.add("fig = 'f'").await,
        c.add("model = 'm2'; del fig; app = 'a'").await,
    ];
    let mut v = vec![];
    for cell in &cells {
        v.push(c.exec(cell).await);
    }
    let tagged = c.ok_post("/tag", json!({"commit": v[1], "tag": "fitted", "message": "Fit the model"})).await;
    assert_eq!(tagged["tag"], "fitted");

    let found = c.ok_get("/search?q=var:model").await;
    assert_eq!(found["commits"], json!([v[1], v[3]]));
    assert_eq!(found["query"], "var:model");
    let found = c.ok_get("/search?q=message:%22fit%20the%22").await;
    assert_eq!(found["commits"], json!([v[1]]));
    let found = c.ok_get("/search?q=var:fig").await;
    assert_eq!(found["commits"], json!([v[2], v[3]]));
    let (s, e) = c.get("/search?q=").await;
    assert_error(s, &e, StatusCode::BAD_REQUEST, "bad_query");
    let (s, e) = c.get("/search?q=owner:me").await;
    assert_error(s, &e, StatusCode::BAD_REQUEST, "bad_query");

    let d = c.ok_get(&format!("/diff?a={}&b={}", v[2], v[3])).await;
    let vars = &d["variables"];
    assert_eq!(vars["changed"], json!(["model"]));
    assert_eq!(vars["added_right"], json!(["app"]));
    assert_eq!(vars["deleted_right"], json!(["fig"]));
    assert_eq!(vars["unchanged"], json!(["data_df"]));
    let ops: Vec<_> = d["code"]["cells"].as_array().unwrap().iter().map(|o| o["op"].clone()).collect();
    // Only the executed cell's counter and output changed.
    assert_eq!(ops, ["kept", "kept", "kept", "modified"].map(|o| json!(o)));
    let last = &d["code"]["cells"][3];
    assert!(last["lines"].as_array().unwrap().iter().all(|l| l["op"] == "keep"));
    assert_eq!(last["cell"]["counter"], 4);

    let same = c.ok_get(&format!("/diff?a={}&b={}", v[3], v[3])).await;
    assert_eq!(same["variables"]["unchanged"], json!(["app", "data_df", "model"]));
    assert!(same["code"]["cells"].as_array().unwrap().iter().all(|o| o["op"] == "kept"));
    let (s, e) = c.get(&format!("/diff?a={}", v[0])).await;
    assert_error(s, &e, StatusCode::BAD_REQUEST, "bad_request");
}

#[tokio::test]
async fn graph_folding() {
    let c = Client::new();
    let a = c.add("a = 1").await;
    let mut ids = vec![];
    for _ in 0..4 {
        ids.push(c.exec(&a).await);
    }
    c.ok_post("/tag", json!({"commit": ids[1], "tag": "keep"})).await;
    let flat = c.ok_get("/graph?fold=false").await;
    assert_eq!(flat["rows"].as_array().unwrap().len(), 5);
    assert_eq!(flat["groups"], json!([]));
    let folded = c.ok_get("/graph?fold=true").await;
    let members: Vec<_> = folded["groups"].as_array().unwrap().iter().map(|g| g["members"].clone()).collect();
    assert_eq!(members, [json!([ids[2]]), json!([ids[0]])]);
    let kinds: Vec<_> = folded["items"].as_array().unwrap().iter().map(|i| i["type"].clone()).collect();
    assert_eq!(kinds, ["commit", "group", "commit", "group", "commit"].map(|k| json!(k)));
    assert_eq!(c.ok_get("/graph?fold=true").await, folded);
    let (s, e) = c.get("/graph?fold=maybe").await;
    assert_error(s, &e, StatusCode::BAD_REQUEST, "bad_request");
}

#[tokio::test]
async fn cell_edits_round_trip() {
    let c = Client::new();
    let a = c.add("a = 1").await;
    let b = c.ok_post("/cells", json!({"op": "add", "kind": "code", "source": "b = 2", "index": 0})).await;
    assert_eq!(b["notebook"]["cells"][0]["source"], "b = 2");
    let b = b["cell_id"].as_str().unwrap().to_string();
    let r = c.ok_post("/cells", json!({"op": "move", "cell_id": b, "index": 1})).await;
    let order: Vec<_> = r["notebook"]["cells"].as_array().unwrap().iter().map(|c| c["id"].clone()).collect();
    assert_eq!(order, [json!(a), json!(b)]);
    let r = c.ok_post("/cells", json!({"op": "delete", "cell_id": a})).await;
    assert_eq!(r["notebook"]["cells"].as_array().unwrap().len(), 1);
    let (s, e) = c.post("/cells", json!({"op": "edit", "cell_id": a, "source": "x"})).await;
    assert_error(s, &e, StatusCode::NOT_FOUND, "unknown_cell");
}

#[tokio::test]
async fn events_long_poll() {
    let c = Client::new();
    let idle = c.ok_get("/events?since=0&timeout_ms=20").await;
    assert_eq!(idle, json!({"version": 0, "changed": false}));

    let waiter = {
        let state = c.state.clone();
        tokio::spawn(async move {
            let req = Request::get("/events?since=0&timeout_ms=5000").body(Body::empty()).unwrap();
            let res = router(state).oneshot(req).await.unwrap();
            let bytes = res.into_body().collect().await.unwrap().to_bytes();
            serde_json::from_slice::<Value>(&bytes).unwrap()
        })
    };
    tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    c.add("x = 1").await;
    let woke = waiter.await.unwrap();
    assert_eq!(woke, json!({"version": 1, "changed": true}));
    assert_eq!(c.ok_get("/events?since=0").await["version"], 1);
}
