//! In-process API harness and response-shape checks.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use seismoflow::api::{router, AppState};
use seismoflow::store::FlowStore;
use seismoflow_core::flow::{parse_flow, serialize_flow};
use seismoflow_core::palette::Palette;
use seismoflow_core::runtime::{MemoryConsole, RuntimeEnv, Services, SystemClock};
use seismoflow_core::simulator::{
    fig2_flow, fig2_scenario, run_scenario, RealTimePacer, ScriptedFeed,
};
use seismoflow_core::transport::InMemoryBroker;
use serde_json::Value as Json;
use tower::ServiceExt;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub struct Harness {
    pub state: Arc<AppState>,
    pub broker: Arc<InMemoryBroker>,
    pub console: MemoryConsole,
    pub feed: Arc<ScriptedFeed>,
    _dir: tempfile::TempDir,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
    pub content_type: String,
}

impl Reply {
    pub fn json(&self) -> Json {
        serde_json::from_slice(&self.body).unwrap_or(Json::Null)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

impl Harness {
    pub fn new() -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(SystemClock);
        let broker = Arc::new(InMemoryBroker::new(clock.clone()));
        let console = MemoryConsole::new();
        let feed = Arc::new(ScriptedFeed::new());
        let registry = fig2_scenario().registry().unwrap();
        let env = RuntimeEnv::new(broker.clone(), Arc::new(registry), clock)
            .services(Services::with_console(Arc::new(console.clone())))
            .feed(feed.clone());
        let store = FlowStore::open(dir.path()).unwrap();
        let state = AppState::new(Arc::new(Palette::standard()), env, store);
        Harness {
            state,
            broker,
            console,
            feed,
            _dir: dir,
        }
    }

    pub fn app(&self) -> Router {
        router(self.state.clone())
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<&str>) -> Reply {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.app().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply {
            status,
            body,
            content_type,
        }
    }
}

/// Success schemas of the API.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Palette,
    FlowList,
    FlowDocument,
    FlowSummary,
    Deploy,
    Status,
    Stop,
}

fn keys(v: &Json) -> Option<BTreeSet<&str>> {
    v.as_object().map(|o| o.keys().map(String::as_str).collect())
}

fn exact_keys(v: &Json, required: &[&str], optional: &[&str]) -> Result<(), String> {
    let got = keys(v).ok_or_else(|| format!("expected an object, got {v}"))?;
    let required: BTreeSet<&str> = required.iter().copied().collect();
    let allowed: BTreeSet<&str> = required.iter().chain(optional).copied().collect();
    if !required.is_subset(&got) || !got.is_subset(&allowed) {
        return Err(format!("keys {got:?}, expected {required:?} (+ {optional:?})"));
    }
    Ok(())
}

fn summary(v: &Json) -> Result<(), String> {
    exact_keys(v, &["id", "label", "nodeCount", "wireCount"], &[])
}

fn status(v: &Json) -> Result<(), String> {
    exact_keys(v, &["flowId", "state", "subscriptions", "pending"], &[])?;
    let subs = v["subscriptions"].as_array().ok_or("subscriptions is not a list")?;
    for s in subs {
        exact_keys(s, &["topic", "nodeId"], &[])?;
    }
    Ok(())
}

pub const ERROR_CODES: [&str; 5] = [
    "malformed",
    "validation_failed",
    "not_found",
    "not_deployed",
    "conflict",
];

pub fn api_error(status: StatusCode, v: &Json) -> Result<(), String> {
    exact_keys(v, &["httpStatus", "code", "message"], &["report"])?;
    if v["httpStatus"].as_u64() != Some(u64::from(status.as_u16())) {
        return Err(format!("httpStatus {} on a {status} response", v["httpStatus"]));
    }
    let code = v["code"].as_str().unwrap_or("");
    if !ERROR_CODES.contains(&code) {
        return Err(format!("unknown error code {code:?}"));
    }
    if let Some(report) = v.get("report") {
        for issue in report.as_array().ok_or("report is not a list")? {
            exact_keys(issue, &["severity", "nodeId", "message"], &[])?;
        }
    }
    Ok(())
}

/// Checks a reply against `schema` when it succeeded, or the error shape.
pub fn check_shape(schema: Schema, reply: &Reply) -> Result<(), String> {
    if !reply.content_type.starts_with("application/json") {
        return Err(format!("content type {:?}", reply.content_type));
    }
    if !reply.status.is_success() {
        return api_error(reply.status, &reply.json());
    }
    let v = reply.json();
    match schema {
        Schema::Palette => {
            for d in v.as_array().ok_or("palette is not a list")? {
                exact_keys(
                    d,
                    &["typeName", "label", "help", "category", "group", "configSchema", "outputs"],
                    &[],
                )?;
                for f in d["configSchema"].as_array().ok_or("configSchema is not a list")? {
                    exact_keys(
                        f,
                        &["name", "label", "kind", "required", "help"],
                        &["default", "options"],
                    )?;
                }
            }
            Ok(())
        }
        Schema::FlowList => v.as_array().ok_or("not a list")?.iter().try_for_each(summary),
        Schema::FlowDocument => parse_flow(&reply.text()).map(|_| ()).map_err(|e| e.to_string()),
        Schema::FlowSummary => summary(&v),
        Schema::Deploy => {
            exact_keys(&v, &["outcome", "status"], &[])?;
            let outcome = v["outcome"].as_str().unwrap_or("");
            if !["deployed", "unchanged", "replaced"].contains(&outcome) {
                return Err(format!("outcome {outcome:?}"));
            }
            status(&v["status"])
        }
        Schema::Status => status(&v),
        Schema::Stop => exact_keys(&v, &["flowId", "drained", "discarded"], &[]),
    }
}

/// A request, the schema it answers with, and the status it must get.
struct Probe {
    method: Method,
    uri: String,
    body: Option<String>,
    schema: Schema,
    expect: StatusCode,
}

fn probe(method: Method, uri: &str, body: Option<String>, schema: Schema, expect: u16) -> Probe {
    Probe {
        method,
        uri: uri.to_string(),
        body,
        schema,
        expect: StatusCode::from_u16(expect).unwrap(),
    }
}

fn edited_fig2() -> String {
    let mut g = fig2_flow();
    g.label = "Two sensors shaking, edited".into();
    serialize_flow(&g)
}

/// Walks every endpoint through success and failure cases in a fixed order and
/// returns every shape or status violation.
pub async fn contract_sweep(h: &Harness) -> Vec<String> {
    use Schema::*;
    let fig2 = serialize_flow(&fig2_flow());
    let invalid = std::fs::read_to_string(fixture("unknown-type.flow.json")).unwrap();
    let dangling = std::fs::read_to_string(fixture("dangling.flow.json")).unwrap();
    let attic = {
        let mut g = fig2_flow();
        g.id = "attic".into();
        g.nodes[0].config.insert("sensor".into(), "attic".into());
        serialize_flow(&g)
    };
    let probes = vec![
        probe(Method::GET, "/api/palette", None, Palette, 200),
        probe(Method::GET, "/api/flows", None, FlowList, 200),
        probe(Method::GET, "/api/flows/fig2", None, FlowDocument, 404),
        probe(Method::GET, "/api/flows/..%2Fetc", None, FlowDocument, 404),
        probe(Method::PUT, "/api/flows/fig2", Some("not json".into()), FlowSummary, 400),
        probe(Method::PUT, "/api/flows/other", Some(fig2.clone()), FlowSummary, 400),
        probe(Method::PUT, "/api/flows/unknown-type", Some(invalid), FlowSummary, 422),
        probe(Method::PUT, "/api/flows/dangling", Some(dangling), FlowSummary, 422),
        probe(Method::PUT, "/api/flows/fig2", Some(fig2.clone()), FlowSummary, 200),
        probe(Method::PUT, "/api/flows/attic", Some(attic), FlowSummary, 200),
        probe(Method::GET, "/api/flows", None, FlowList, 200),
        probe(Method::GET, "/api/flows/fig2", None, FlowDocument, 200),
        probe(Method::GET, "/api/flows/fig2/deploy", None, Status, 404),
        probe(Method::DELETE, "/api/flows/fig2/deploy", None, Stop, 409),
        probe(Method::POST, "/api/flows/nope/deploy", None, Deploy, 404),
        probe(Method::POST, "/api/flows/attic/deploy", None, Deploy, 422),
        probe(Method::POST, "/api/flows/fig2/deploy?force=maybe", None, Deploy, 400),
        probe(Method::POST, "/api/flows/fig2/deploy", None, Deploy, 200),
        probe(Method::POST, "/api/flows/fig2/deploy", None, Deploy, 200),
        probe(Method::GET, "/api/flows/fig2/deploy", None, Status, 200),
        probe(Method::PUT, "/api/flows/fig2", Some(edited_fig2()), FlowSummary, 200),
        probe(Method::POST, "/api/flows/fig2/deploy", None, Deploy, 409),
        probe(Method::POST, "/api/flows/fig2/deploy?force=true", None, Deploy, 200),
        probe(Method::DELETE, "/api/flows/fig2/deploy", None, Stop, 200),
        probe(Method::DELETE, "/api/flows/fig2/deploy", None, Stop, 409),
        probe(Method::GET, "/api/nothing-here", None, Palette, 404),
        probe(Method::PATCH, "/api/flows/fig2", None, FlowSummary, 405),
        probe(Method::POST, "/api/palette", None, Palette, 405),
    ];
    let mut violations = Vec::new();
    for p in probes {
        let reply = h.call(p.method.clone(), &p.uri, p.body.as_deref()).await;
        let label = format!("{} {}", p.method, p.uri);
        if reply.status != p.expect {
            violations.push(format!("{label}: status {} (wanted {}): {}", reply.status, p.expect, reply.text()));
        }
        if let Err(e) = check_shape(p.schema, &reply) {
            violations.push(format!("{label}: {e}"));
        }
    }
    violations
}

/// PUT a document, GET it back: the bytes must be the canonical serialization.
pub async fn put_get_identity(h: &Harness, id: &str, document: &str) -> Result<(), String> {
    let put = h.call(Method::PUT, &format!("/api/flows/{id}"), Some(document)).await;
    if put.status != StatusCode::OK {
        return Err(format!("PUT answered {}: {}", put.status, put.text()));
    }
    let get = h.call(Method::GET, &format!("/api/flows/{id}"), None).await;
    let canonical = serialize_flow(&parse_flow(document).map_err(|e| e.to_string())?);
    if get.body != canonical.as_bytes() {
        return Err(format!("GET returned different bytes for {id}"));
    }
    let again = h.call(Method::PUT, &format!("/api/flows/{id}"), Some(&get.text())).await;
    let get2 = h.call(Method::GET, &format!("/api/flows/{id}"), None).await;
    if again.status != StatusCode::OK || get2.body != get.body {
        return Err(format!("second round trip of {id} changed the document"));
    }
    Ok(())
}

/// Deploy and stop fig2, watching the broker's subscription count.
pub async fn subscription_transitions(h: &Harness) -> Result<(), String> {
    let expect = |what: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(format!("{what}: {got} subscriptions, wanted {want}"))
        }
    };
    let fig2 = serialize_flow(&fig2_flow());
    h.call(Method::PUT, "/api/flows/fig2", Some(&fig2)).await;
    expect("before deploy", h.broker.subscription_count(), 0)?;
    let r = h.call(Method::POST, "/api/flows/fig2/deploy", None).await;
    expect("after deploy", h.broker.subscription_count(), 2)?;
    expect("reported", r.json()["status"]["subscriptions"].as_array().map_or(0, Vec::len), 2)?;
    h.call(Method::POST, "/api/flows/fig2/deploy", None).await;
    expect("after identical redeploy", h.broker.subscription_count(), 2)?;
    h.call(Method::PUT, "/api/flows/fig2", Some(&edited_fig2())).await;
    h.call(Method::POST, "/api/flows/fig2/deploy?force=true", None).await;
    expect("after forced redeploy", h.broker.subscription_count(), 2)?;
    let s = h.call(Method::DELETE, "/api/flows/fig2/deploy", None).await;
    if s.status != StatusCode::OK {
        return Err(format!("stop answered {}", s.status));
    }
    expect("after stop", h.broker.subscription_count(), 0)
}

/// Opens the event stream, deploys fig2, plays the fig2 scenario and returns
/// the events seen on the stream within `grace` of the last one.
pub async fn fig2_event_stream(h: &Harness, grace: Duration) -> Result<Vec<Json>, String> {
    let req = Request::builder().uri("/api/events").body(Body::empty()).unwrap();
    let resp = h.app().oneshot(req).await.map_err(|e| e.to_string())?;
    let ct = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or("");
    if !ct.starts_with("text/event-stream") {
        return Err(format!("event stream content type {ct:?}"));
    }
    let mut body = resp.into_body();

    h.call(Method::PUT, "/api/flows/fig2", Some(&serialize_flow(&fig2_flow()))).await;
    let d = h.call(Method::POST, "/api/flows/fig2/deploy", None).await;
    if d.status != StatusCode::OK {
        return Err(format!("deploy answered {}: {}", d.status, d.text()));
    }
    let broker = h.broker.clone();
    let feed = h.feed.clone();
    tokio::task::spawn_blocking(move || {
        let mut pacer = RealTimePacer::new(0.0);
        run_scenario(&fig2_scenario(), broker.as_ref(), &feed, &mut pacer)
    })
    .await
    .map_err(|e| e.to_string())?
    .map_err(|e| e.to_string())?;

    let mut buffer = String::new();
    let mut events = Vec::new();
    let mut wait = Duration::from_secs(5);
    loop {
        match tokio::time::timeout(wait, body.frame()).await {
            Err(_) => break,
            Ok(None) => break,
            Ok(Some(Err(e))) => return Err(e.to_string()),
            Ok(Some(Ok(frame))) => {
                if let Some(data) = frame.data_ref() {
                    buffer.push_str(&String::from_utf8_lossy(data));
                }
            }
        }
        while let Some(end) = buffer.find("\n\n") {
            let chunk: String = buffer.drain(..end + 2).collect();
            for line in chunk.lines() {
                if let Some(data) = line.strip_prefix("data:") {
                    let v: Json = serde_json::from_str(data.trim()).map_err(|e| e.to_string())?;
                    if v["kind"] == "notify" {
                        wait = grace;
                    }
                    events.push(v);
                }
            }
        }
    }
    Ok(events)
}
