use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use fairstep::bundle::Bundle;
use fairstep::scenario::Scenario;
use fairstep::service::{router, AppState, CandidatesView, CommitView, SessionView, TraceView, API_VERSION_HEADER};
use fairstep::stepwise::{DecisionTrace, Objective, SelectionPolicy, StepAction};
use fairstep::synthpop::generate;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    bundle_dir: PathBuf,
    scenario: Scenario,
}

/// A 30,000-person draw of the default scenario, written as a bundle.
fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let scenario = Scenario::default_scenario();
        let mut spec = scenario.spec.clone();
        spec.n = 30_000;
        let records = generate(&spec).unwrap();
        let bundle = Bundle::build(records, true, scenario.maps.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bundle_dir = dir.path().join("bundle");
        bundle.write(&bundle_dir).unwrap();
        Fixture {
            _dir: dir,
            bundle_dir,
            scenario,
        }
    })
}

fn app() -> Router {
    router(AppState::with_default_bundle(Bundle::load(&fixture().bundle_dir).unwrap()))
}

struct Reply {
    status: StatusCode,
    api_version: Option<String>,
    body: Value,
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let api_version = res
        .headers()
        .get(API_VERSION_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    Reply {
        status,
        api_version,
        body,
    }
}

fn create_body(policy: &SelectionPolicy, bundle: Option<&Path>) -> Value {
    let s = &fixture().scenario;
    let mut v = json!({
        "baseline": s.baseline,
        "groups": s.groups,
        "policy": policy,
        "pool": s.pool,
        "hint_policies": [s.max_r2],
    });
    if let Some(b) = bundle {
        v["bundle"] = json!(b);
    }
    v
}

async fn open(app: &Router) -> SessionView {
    let s = &fixture().scenario;
    let r = call(app, "POST", "/sessions", Some(create_body(&s.net_comp, None))).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    serde_json::from_value(r.body).unwrap()
}

fn parse<T: serde::de::DeserializeOwned>(r: Reply) -> T {
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    serde_json::from_value(r.body).unwrap()
}

#[tokio::test]
async fn create_and_read_formula() {
    let app = app();
    let r = call(&app, "POST", "/sessions", Some(create_body(&fixture().scenario.net_comp, None))).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.api_version.as_deref(), Some("1"));
    let created: SessionView = serde_json::from_value(r.body).unwrap();
    assert_eq!(created.revision, 0);
    assert_eq!(created.formula, fixture().scenario.baseline);
    assert!(created.report.group("mhsud").unwrap().net_compensation < 0.0);
    let again: SessionView = parse(call(&app, "GET", &format!("/sessions/{}/formula", created.session_id), None).await);
    assert_eq!(again.report, created.report);
    // The same bundle named by path gives the same numbers.
    let by_path = call(
        &app,
        "POST",
        "/sessions",
        Some(create_body(&fixture().scenario.net_comp, Some(&fixture().bundle_dir))),
    )
    .await;
    assert_eq!(by_path.status, StatusCode::CREATED);
    let by_path: SessionView = serde_json::from_value(by_path.body).unwrap();
    assert_ne!(by_path.session_id, created.session_id);
    assert_eq!(by_path.report, created.report);
}

#[tokio::test]
async fn create_errors() {
    let app = app();
    let s = &fixture().scenario;
    let r = call(&app, "POST", "/sessions", Some(create_body(&s.net_comp, Some(Path::new("/no/such/bundle"))))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.body["error"].as_str().unwrap().contains("/no/such/bundle"));
    let mut body = create_body(&s.net_comp, None);
    body["hint_policies"] = json!([SelectionPolicy::new(Objective::MaxR2 { min_gain: 0.0 })
        .with_mode(fairstep::metrics::EvaluationMode::CrossValidated { folds: 5, seed: 1 })]);
    assert_eq!(call(&app, "POST", "/sessions", Some(body)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let mut body = create_body(&s.net_comp, None);
    body["groups"] = json!([{ "group_id": "bad", "ccs_categories": ["NOT_A_CCS"] }]);
    assert_eq!(call(&app, "POST", "/sessions", Some(body)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = call(&app, "POST", "/sessions", Some(json!({ "baseline": 3 }))).await;
    assert!(r.status.is_client_error());
    assert!(r.body["error"].is_string());
    let bare = router(AppState::new());
    let r = call(&bare, "POST", "/sessions", Some(create_body(&s.net_comp, None))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn preview_then_commit_is_bit_identical() {
    let app = app();
    let session = open(&app).await;
    let uri = format!("/sessions/{}/candidates", session.session_id);
    let preview: CandidatesView = parse(call(&app, "GET", &uri, None).await);
    let preview_again: CandidatesView = parse(call(&app, "GET", &uri, None).await);
    assert_eq!(preview.revision, 0);
    assert_eq!(
        serde_json::to_value(&preview).unwrap(),
        serde_json::to_value(&preview_again).unwrap()
    );
    assert_eq!(preview.candidates.len(), fixture().scenario.pool.blocks().len());
    assert!(preview.candidates.iter().all(|c| c.hints.len() == 2));
    let unchanged: SessionView = parse(call(&app, "GET", &format!("/sessions/{}/formula", session.session_id), None).await);
    assert_eq!(unchanged.report, session.report);
    let steps = format!("/sessions/{}/steps", session.session_id);
    let commit = |c: &fairstep::service::Candidate, revision: u64| {
        let body = json!({ "action": c.action, "revision": revision });
        let app = app.clone();
        let steps = steps.clone();
        async move { call(&app, "POST", &steps, Some(body)).await }
    };
    let first = &preview.candidates[0];
    let done: CommitView = parse(commit(first, 0).await);
    assert_eq!(done.revision, 1);
    assert_eq!(
        serde_json::to_value(&done.entry.deltas).unwrap(),
        serde_json::to_value(&first.deltas).unwrap()
    );
    assert_eq!(done.report, first.report_after);
    assert!(done.entry.accepted);
    assert!(done.entry.reason.starts_with("committed by analyst"));
    let back: SessionView = parse(call(&app, "POST", &format!("/sessions/{}/undo", session.session_id), None).await);
    assert_eq!(back.revision, 2);
    // The old preview's revision is stale now, but its numbers still hold
    // because undo restored the state they were computed from.
    let second = &preview.candidates[1];
    assert_eq!(commit(second, 0).await.status, StatusCode::CONFLICT);
    let done: CommitView = parse(commit(second, 2).await);
    assert_eq!(
        serde_json::to_value(&done.entry.deltas).unwrap(),
        serde_json::to_value(&second.deltas).unwrap()
    );
}

#[tokio::test]
async fn undo_restores_and_revisions_increase() {
    let app = app();
    let session = open(&app).await;
    let id = &session.session_id;
    let preview: CandidatesView = parse(call(&app, "GET", &format!("/sessions/{id}/candidates"), None).await);
    let mut revision = 0;
    let mut history = vec![(session.formula.clone(), session.report.clone())];
    for c in preview.candidates.iter().take(2) {
        let commit: CommitView = parse(
            call(
                &app,
                "POST",
                &format!("/sessions/{id}/steps"),
                Some(json!({ "action": c.action, "revision": revision })),
            )
            .await,
        );
        assert!(commit.revision > revision);
        revision = commit.revision;
        history.push((commit.formula, commit.report));
    }
    let trace: TraceView = parse(call(&app, "GET", &format!("/sessions/{id}/trace"), None).await);
    assert_eq!(trace.trace.entries.len(), 2);
    assert_eq!(trace.trace.final_formula(), history[2].0);
    let stale = call(&app, "POST", &format!("/sessions/{id}/undo"), Some(json!({ "revision": 0 }))).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    for k in (0..2).rev() {
        let back: SessionView = parse(
            call(&app, "POST", &format!("/sessions/{id}/undo"), Some(json!({ "revision": revision }))).await,
        );
        assert!(back.revision > revision);
        revision = back.revision;
        assert_eq!(back.formula, history[k].0);
        assert_eq!(back.report, history[k].1);
    }
    let r = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["error"], "nothing to undo");
    let trace: TraceView = parse(call(&app, "GET", &format!("/sessions/{id}/trace"), None).await);
    assert!(trace.trace.entries.is_empty());
}

#[tokio::test]
async fn invalid_actions_and_unknown_sessions() {
    let app = app();
    let session = open(&app).await;
    let id = &session.session_id;
    let present = session.formula.variables()[1].clone();
    let add_present = StepAction::add(vec![present]);
    let r = call(&app, "POST", &format!("/sessions/{id}/steps"), Some(json!({ "action": add_present, "revision": 0 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.body["error"].as_str().unwrap().starts_with("invalid step"));
    let intercept = StepAction::remove(vec![fairstep::design::VariableId::intercept()]);
    let r = call(&app, "POST", &format!("/sessions/{id}/steps"), Some(json!({ "action": intercept, "revision": 0 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    // Outside the session's universe.
    let stranger = StepAction::add(vec![fairstep::design::VariableId::hcc("HCC_NOPE")]);
    let r = call(&app, "POST", &format!("/sessions/{id}/steps"), Some(json!({ "action": stranger, "revision": 0 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = call(&app, "POST", &format!("/sessions/{id}/steps"), Some(json!({ "revision": 0 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let unchanged: SessionView = parse(call(&app, "GET", &format!("/sessions/{id}/formula"), None).await);
    assert_eq!(unchanged.revision, 0);

    for (method, path) in [
        ("GET", "formula"),
        ("GET", "candidates"),
        ("GET", "trace"),
        ("GET", "trace/dot"),
        ("POST", "undo"),
    ] {
        let r = call(&app, method, &format!("/sessions/nope/{path}"), None).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{path}");
        assert_eq!(r.api_version.as_deref(), Some("1"));
    }
    let r = call(&app, "POST", "/sessions/nope/steps", Some(json!({ "action": add_present_json(), "revision": 0 }))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/elsewhere", None).await.status, StatusCode::NOT_FOUND);
}

fn add_present_json() -> Value {
    json!({ "kind": "add", "variables": [{ "kind": "hcc", "key": "HCC_DEPRESSION" }] })
}

#[tokio::test]
async fn cli_trace_replays_through_http() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: String| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let baseline = write("baseline.json", fx.scenario.baseline.to_json());
    let pool = write("pool.json", serde_json::to_string(&fx.scenario.pool).unwrap());
    let groups = write("groups.json", serde_json::to_string(&fx.scenario.groups).unwrap());
    let policy = write("policy.json", serde_json::to_string(&fx.scenario.net_comp).unwrap());
    let trace_path = dir.path().join("trace.json");
    let args = [
        "fairstep",
        "stepwise",
        "--bundle",
        fx.bundle_dir.to_str().unwrap(),
        "--baseline",
        baseline.to_str().unwrap(),
        "--pool",
        pool.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "--groups",
        groups.to_str().unwrap(),
        "--out-trace",
        trace_path.to_str().unwrap(),
    ]
    .map(String::from);
    let code = tokio::task::spawn_blocking(move || fairstep::cli::run(args, &mut Vec::new(), &mut Vec::new()))
        .await
        .unwrap();
    assert_eq!(code, 0);
    let cli_trace = DecisionTrace::parse(&std::fs::read_to_string(&trace_path).unwrap()).unwrap();
    let accepted = cli_trace.accepted_actions();
    assert!(!accepted.is_empty());

    let app = app();
    let session = open(&app).await;
    let id = &session.session_id;
    let mut revision = session.revision;
    let mut last = None;
    for action in accepted {
        let commit: CommitView =
            parse(call(&app, "POST", &format!("/sessions/{id}/steps"), Some(json!({ "action": action, "revision": revision }))).await);
        revision = commit.revision;
        last = Some(commit);
    }
    let last = last.unwrap();
    let cli_final = cli_trace.entries.iter().rev().find(|e| e.accepted).unwrap();
    assert_eq!(last.formula, cli_trace.final_formula());
    assert_eq!(
        serde_json::to_value(&last.report).unwrap(),
        serde_json::to_value(&cli_final.report_after).unwrap()
    );
    let dot = call(&app, "GET", &format!("/sessions/{id}/trace/dot"), None).await;
    assert_eq!(dot.status, StatusCode::OK);
    assert!(dot.body.as_str().unwrap().starts_with("digraph"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_reads_and_racing_commits() {
    let app = app();
    let session = open(&app).await;
    let id = session.session_id.clone();
    let preview: CandidatesView = parse(call(&app, "GET", &format!("/sessions/{id}/candidates"), None).await);
    let reads: Vec<_> = (0..8)
        .map(|_| {
            let app = app.clone();
            let id = id.clone();
            tokio::spawn(async move { call(&app, "GET", &format!("/sessions/{id}/formula"), None).await })
        })
        .collect();
    let commits: Vec<_> = preview.candidates[..2]
        .iter()
        .map(|c| {
            let app = app.clone();
            let id = id.clone();
            let body = json!({ "action": c.action, "revision": 0 });
            tokio::spawn(async move { call(&app, "POST", &format!("/sessions/{id}/steps"), Some(body)).await })
        })
        .collect();
    for r in reads {
        let r = r.await.unwrap();
        assert_eq!(r.status, StatusCode::OK);
    }
    let mut statuses: Vec<StatusCode> = Vec::new();
    for c in commits {
        statuses.push(c.await.unwrap().status);
    }
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
    // A second session is untouched by the first.
    let other = open(&app).await;
    assert_eq!(other.revision, 0);
    let trace: TraceView = parse(call(&app, "GET", &format!("/sessions/{id}/trace"), None).await);
    assert_eq!(trace.trace.entries.len(), 1);
    assert_eq!(trace.revision, 1);
}
