mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use explorable_cli::service::{router, AppState, ServiceConfig};
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::precompute_defaults;
use explorable_core::prober::ProbeContext;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

struct Fixture {
    state: Arc<AppState>,
    runner: Arc<LeanRunner>,
    _dir: tempfile::TempDir,
}

fn fixture(precompute: bool, config: ServiceConfig) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let paths = common::paths(dir.path());
    let runner = Arc::new(LeanRunner::reference());
    let ctx = ProbeContext::new(&paths.workdir);
    let docs: Vec<_> = ["b11", "pn2"]
        .iter()
        .map(|id| {
            let mut d = common::build_doc(&paths, id, &runner);
            if precompute {
                precompute_defaults(&mut d, &runner, &ctx).unwrap();
            }
            d
        })
        .collect();
    let state = Arc::new(AppState::new(docs, runner.clone(), ctx, config));
    Fixture {
        state,
        runner,
        _dir: dir,
    }
}

async fn get(state: &Arc<AppState>, uri: &str) -> (StatusCode, Vec<u8>) {
    let resp = router(state.clone())
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body().collect().await.unwrap().to_bytes().to_vec(),
    )
}

async fn get_json(state: &Arc<AppState>, uri: &str) -> (StatusCode, Value) {
    let (status, body) = get(state, uri).await;
    (status, serde_json::from_slice(&body).unwrap())
}

#[tokio::test]
async fn lists_and_views_documents() {
    let f = fixture(false, ServiceConfig::default());
    let (status, list) = get_json(&f.state, "/documents").await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<_> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["b11", "pn2"]);
    let (status, view) = get_json(&f.state, "/documents/b11").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["steps"].as_array().unwrap().len(), 8);
    assert_eq!(view["steps"][1]["template"], "x^2 - 1 = {{x}}^2 - 1 = {{n}}");
    assert!(view["maps"]["relies_on"]["7"].is_object());
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let f = fixture(false, ServiceConfig::default());
    for uri in [
        "/documents/nope",
        "/documents/nope/eval?x=2",
        "/documents/b11/deps?fact=zzz",
    ] {
        let (status, body) = get_json(&f.state, uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(body["error"].is_string());
    }
}

#[tokio::test]
async fn invalid_bindings_are_rejected() {
    let f = fixture(false, ServiceConfig::default());
    for uri in [
        "/documents/b11/eval?x=abc",
        "/documents/b11/eval?y=2",
        "/documents/b11/eval?x=99999999999999999999",
        "/documents/b11/sweep?var=y",
        "/documents/b11/sweep?lo=5&hi=1",
        "/documents/b11/deps",
    ] {
        let (status, _) = get(&f.state, uri).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{uri}");
    }
}

#[tokio::test]
async fn eval_renders_worked_example() {
    let f = fixture(false, ServiceConfig::default());
    let (status, e) = get_json(&f.state, "/documents/b11/eval?x=2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(e["hypotheses_ok"], false);
    assert_eq!(e["break_step"], 5);
    assert_eq!(e["cached"], false);
    assert_eq!(e["probes_pending"], false);
    assert_eq!(e["worked"][1]["text"], "x^2 - 1 = 2^2 - 1 = 3");
    let runs = f.runner.probe_runs();
    let (_, again) = get_json(&f.state, "/documents/b11/eval?x=2").await;
    assert_eq!(again["cached"], true);
    assert_eq!(f.runner.probe_runs(), runs);
}

#[tokio::test]
async fn precomputed_eval_runs_no_probes() {
    let f = fixture(true, ServiceConfig::default());
    let runs = f.runner.probe_runs();
    let (status, e) = get_json(&f.state, "/documents/b11/eval?x=7").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(e["cached"], true);
    assert_eq!(e["break_step"], Value::Null);
    assert_eq!(f.runner.probe_runs(), runs);
    let (_, s) = get_json(&f.state, "/documents/b11/sweep?lo=0&hi=4").await;
    assert_eq!(s["cached"], true);
    let breaks: Vec<_> = s["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["break_step"].clone())
        .collect();
    assert_eq!(breaks.len(), 5);
    assert_eq!(breaks[2], 5);
    assert_eq!(breaks[3], Value::Null);
    assert_eq!(f.runner.probe_runs(), runs);
}

#[tokio::test]
async fn uncached_sweep_is_computed() {
    let f = fixture(false, ServiceConfig::default());
    let (status, s) = get_json(&f.state, "/documents/b11/sweep?lo=2&hi=3").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["cached"], false);
    assert_eq!(s["entries"][0]["break_step"], 5);
}

#[tokio::test]
async fn deadline_returns_oracle_only() {
    let f = fixture(
        false,
        ServiceConfig {
            deadline: Duration::ZERO,
            max_uncached: 1,
        },
    );
    let (status, e) = get_json(&f.state, "/documents/b11/eval?x=4").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(e["probes_pending"], true);
    assert_eq!(e["hypotheses_ok"], true);
    assert_eq!(e["conclusion_holds"], true);
    assert_eq!(e["per_step"].as_array().unwrap().len(), 0);
    // The evaluation finishes in the background and is then served.
    let mut done = None;
    for _ in 0..200 {
        tokio::time::sleep(Duration::from_millis(25)).await;
        let (_, e) = get_json(&f.state, "/documents/b11/eval?x=4").await;
        if e["probes_pending"] == false {
            done = Some(e);
            break;
        }
    }
    let done = done.expect("background evaluation completes");
    assert_eq!(done["cached"], true);
    assert_eq!(done["per_step"].as_array().unwrap().len(), 8);
}

#[tokio::test]
async fn concurrent_requests_share_one_evaluation() {
    let f = fixture(false, ServiceConfig::default());
    let before = f.runner.probe_runs();
    let reqs = (0..6).map(|_| {
        let state = f.state.clone();
        async move { get(&state, "/documents/b11/eval?x=6").await }
    });
    let bodies = futures_join(reqs).await;
    let per_eval = 8;
    assert_eq!(f.runner.probe_runs() - before, per_eval);
    assert!(bodies.iter().all(|(s, _)| *s == StatusCode::OK));
}

async fn futures_join<F: std::future::Future<Output = (StatusCode, Vec<u8>)> + Send + 'static>(
    futs: impl Iterator<Item = F>,
) -> Vec<(StatusCode, Vec<u8>)> {
    let handles: Vec<_> = futs.map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test]
async fn deps_of_fact() {
    let f = fixture(false, ServiceConfig::default());
    let (status, d) = get_json(&f.state, "/documents/b11/deps?fact=n").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(d["step"], 2);
    let used_by: Vec<_> = d["used_by"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(used_by.contains(&"hns"), "{used_by:?}");
    let downstream: Vec<_> = d["downstream"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_i64().unwrap())
        .collect();
    assert!(downstream.contains(&7), "{downstream:?}");
    let (_, s) = get_json(&f.state, "/documents/b11/deps?step=7").await;
    assert!(s["upstream"]["5"].is_array());
}

#[tokio::test]
async fn responses_are_stable() {
    let f = fixture(true, ServiceConfig::default());
    for uri in [
        "/documents",
        "/documents/b11",
        "/documents/b11/eval?x=3",
        "/documents/b11/deps?fact=hr",
    ] {
        let (_, a) = get(&f.state, uri).await;
        let (_, b) = get(&f.state, uri).await;
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn document_without_oracle_values() {
    let f = fixture(false, ServiceConfig::default());
    let (status, e) = get_json(&f.state, "/documents/pn2/eval?x=1&y=2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(e["break_step"], 2);
}

#[tokio::test]
async fn cors_headers_present() {
    let f = fixture(false, ServiceConfig::default());
    let resp = router(f.state.clone())
        .oneshot(
            Request::get("/documents")
                .header("origin", "http://localhost:5173")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
