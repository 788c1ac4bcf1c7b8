//! In-process service harness.
#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, TimeDelta, Utc};
use http_body_util::BodyExt;
use nnm_core::{Clock, FallbackEmbedder, FixtureBackend, RetryPolicy};
use nnm_service::{router, AppState, Store};
use serde_json::Value;
use tower::ServiceExt;

pub const ROE_SEED: &str = "It is better to overreact than underreact";
pub const ROE_TEMPLATE: &str = "Rules of engagement in the spirit of \"{}\":";

/// Clock that only moves when told to.
#[derive(Debug)]
pub struct StepClock(Mutex<DateTime<Utc>>);

impl StepClock {
    pub fn new() -> Self {
        Self(Mutex::new(DateTime::UNIX_EPOCH))
    }

    pub fn advance_ms(&self, ms: i64) {
        *self.0.lock().unwrap() += TimeDelta::milliseconds(ms);
    }
}

impl Clock for StepClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

pub fn core_fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub fn roe_backend() -> FixtureBackend {
    FixtureBackend::load(core_fixture("roe_prompt.tsv")).unwrap()
}

pub struct Harness {
    pub app: Router,
    pub clock: Arc<StepClock>,
    pub store: Store,
}

impl Harness {
    pub fn new(dir: &Path) -> Self {
        let clock = Arc::new(StepClock::new());
        let store = Store::open(dir).unwrap();
        let state = AppState::new(
            store.clone(),
            Arc::new(roe_backend()),
            Arc::new(FallbackEmbedder::default()),
            clock.clone(),
        )
        .with_retry(RetryPolicy::immediate(1));
        Self {
            app: router(Arc::new(state)),
            clock,
            store,
        }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body.map(|b| b.to_string())).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
        };
        (status, value)
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    pub async fn text(&self, uri: &str) -> String {
        let (status, bytes) = self.raw(Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
        String::from_utf8(bytes).unwrap()
    }

    pub async fn create(&self) -> String {
        let (status, doc) = self.call(Method::POST, "/sessions", None).await;
        assert_eq!(status, StatusCode::CREATED);
        doc["session_id"].as_str().unwrap().to_owned()
    }
}

pub fn roe_map() -> nnm_core::MapGraph {
    serde_json::from_str(&std::fs::read_to_string(core_fixture("roe_map.json")).unwrap()).unwrap()
}

pub fn roe_script_text() -> String {
    std::fs::read_to_string(core_fixture("roe_script.json")).unwrap()
}

/// Fragment id and the node it is assigned to in the scripted session.
pub const ASSIGNMENTS: [(u64, &str); 3] = [(1, "kill the enemy"), (3, "the enemy"), (4, "Decisive action")];
const FRAME_MS: i64 = 40;

/// Drives a full curation and replay session over HTTP and returns its id.
pub async fn scripted_session(h: &Harness) -> String {
    let id = h.create().await;
    let (_, mut doc) = h.call(Method::GET, &format!("/sessions/{id}"), None).await;
    doc["graph"] = serde_json::to_value(roe_map()).unwrap();
    let (status, _) = h.call(Method::PUT, &format!("/sessions/{id}"), Some(doc)).await;
    assert_eq!(status, StatusCode::OK);

    let prompt = serde_json::json!({ "template": ROE_TEMPLATE, "seed": ROE_SEED, "seed_group": "masculine" });
    let (status, _) = h.call(Method::POST, &format!("/sessions/{id}/prompt"), Some(prompt)).await;
    assert_eq!(status, StatusCode::OK);
    for (fid, node) in ASSIGNMENTS {
        h.clock.advance_ms(1000);
        let uri = format!("/sessions/{id}/fragments/{fid}/assign");
        let (status, _) = h.call(Method::POST, &uri, Some(serde_json::json!({ "node": node }))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, _) = h.call(Method::POST, &format!("/sessions/{id}/layout"), Some(serde_json::json!({ "seed": 7 }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = h.raw(Method::PUT, &format!("/sessions/{id}/script"), Some(roe_script_text())).await;
    assert_eq!(status, StatusCode::OK);

    for direction in ["advance", "advance", "reverse", "advance", "advance", "advance", "advance", "advance", "advance", "advance", "advance"] {
        h.clock.advance_ms(FRAME_MS);
        let step = serde_json::json!({ "direction": direction });
        let (status, _) = h.call(Method::POST, &format!("/sessions/{id}/script/step"), Some(step)).await;
        assert_eq!(status, StatusCode::OK);
        for _ in 0..3 {
            h.clock.advance_ms(FRAME_MS);
            let (status, _) = h.call(Method::GET, &format!("/sessions/{id}/frame"), None).await;
            assert_eq!(status, StatusCode::OK);
        }
    }
    id
}

/// The same session built by calling the core operations directly.
pub fn direct_session(id: &str) -> nnm_core::SessionDocument {
    use nnm_core::{LayoutParams, PromptTemplate, Script, SessionDocument, StepDirection};
    let e = FallbackEmbedder::default();
    let mut now = DateTime::<Utc>::UNIX_EPOCH;
    let mut doc = SessionDocument::new(id, now);
    doc.graph = roe_map();
    let template = PromptTemplate::new(ROE_TEMPLATE).unwrap();
    doc.submit_prompt(&template, ROE_SEED, Some("masculine"), &roe_backend(), &RetryPolicy::immediate(1), now)
        .unwrap();
    for (fid, node) in ASSIGNMENTS {
        now += TimeDelta::milliseconds(1000);
        doc.assign_fragment(fid, node, now).unwrap();
    }
    doc.run_layout(&LayoutParams { seed: 7, ..LayoutParams::default() }, now).unwrap();
    doc.load_script(Script::from_json(&roe_script_text()).unwrap(), now);
    let mut last_frame: Option<DateTime<Utc>> = None;
    let directions = [
        StepDirection::Advance,
        StepDirection::Advance,
        StepDirection::Reverse,
    ]
    .into_iter()
    .chain(std::iter::repeat_n(StepDirection::Advance, 8));
    for direction in directions {
        now += TimeDelta::milliseconds(FRAME_MS);
        doc.step_script(direction, &e, now).unwrap();
        for _ in 0..3 {
            now += TimeDelta::milliseconds(FRAME_MS);
            let elapsed = last_frame.map_or(std::time::Duration::ZERO, |t| (now - t).to_std().unwrap());
            last_frame = Some(now);
            doc.frame(elapsed.min(nnm_service::MAX_FRAME_DT).as_secs_f64());
        }
    }
    doc
}
