//! Drives the HTTP API in-process: opens a session on a small scenario
//! draw, previews candidates, commits the one the net-compensation policy
//! likes best, then undoes it.

use axum::body::Body;
use axum::http::Request;
use fairstep::bundle::Bundle;
use fairstep::scenario::Scenario;
use fairstep::service::{router, AppState};
use fairstep::synthpop::generate;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    println!("{method} {uri} -> {}", res.status());
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    serde_json::from_slice(&bytes).unwrap_or(Value::Null)
}

#[tokio::main]
async fn main() -> fairstep::Result<()> {
    let s = Scenario::default_scenario();
    let mut spec = s.spec.clone();
    spec.n = 50_000;
    let bundle = Bundle::build(generate(&spec)?, true, s.maps.clone())?;
    let app = router(AppState::with_default_bundle(bundle));

    let created = call(
        &app,
        "POST",
        "/sessions",
        json!({ "baseline": s.baseline, "groups": s.groups, "policy": s.net_comp, "pool": s.pool, "hint_policies": [s.max_r2] }),
    )
    .await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let nc = |v: &Value| v["group_metrics"]["mhsud"]["net_compensation"].as_f64().unwrap();
    println!("baseline r2 {:.5} mhsud nc {:.2}", created["report"]["r2"], nc(&created["report"]));

    let cands = call(&app, "GET", &format!("/sessions/{id}/candidates"), Value::Null).await;
    let list = cands["candidates"].as_array().unwrap();
    for c in list {
        let hints: Vec<String> = c["hints"]
            .as_array()
            .unwrap()
            .iter()
            .map(|h| format!("{}={}", h["policy"].as_str().unwrap(), h["accept"]))
            .collect();
        println!(
            "  {:<6} {:<13} dr2 {:+.5}  nc after {:9.2}  {}",
            c["action"]["kind"].as_str().unwrap(),
            c["action"]["block"].as_str().unwrap_or("-"),
            c["deltas"]["r2"]["absolute"].as_f64().unwrap(),
            nc(&c["report_after"]),
            hints.join(" ")
        );
    }
    let best = list
        .iter()
        .min_by(|a, b| nc(&a["report_after"]).abs().total_cmp(&nc(&b["report_after"]).abs()))
        .expect("at least one candidate");
    let commit = call(
        &app,
        "POST",
        &format!("/sessions/{id}/steps"),
        json!({ "action": best["action"], "revision": cands["revision"] }),
    )
    .await;
    println!("committed; revision {} reason: {}", commit["revision"], commit["entry"]["reason"]);
    let undone = call(&app, "POST", &format!("/sessions/{id}/undo"), json!({})).await;
    println!("undone; revision {} mhsud nc {:.2}", undone["revision"], nc(&undone["report"]));
    Ok(())
}
