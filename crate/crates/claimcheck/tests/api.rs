use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use claimcheck::api::router;
use claimcheck::store::{read_log, Store};
use claimcheck_core::config::Config;
use claimcheck_core::corpus::{generate_synthetic_corpus, save_corpus, Annotation, CorpusProfile, ResolvedCheck};
use claimcheck_core::engine::{Answer, Mode, Next, QuerySuggestion, Report, Screen, ScreenContent};
use claimcheck_core::harness::{ground_truth_map, simulate, SimChecker};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

type Truth = Arc<HashMap<String, (ResolvedCheck, Annotation)>>;

fn tiny_profile() -> CorpusProfile {
    CorpusProfile { n_relations: 4, n_keys: 6, n_attributes: 3, n_formulas: 5, n_claims: 18, n_sections: 3, ..CorpusProfile::small() }
}

/// Writes a tiny corpus to `dir` and returns a config pointing at it.
fn tiny_config(dir: &Path) -> (Config, Truth) {
    let corpus = generate_synthetic_corpus(&tiny_profile(), 5).unwrap();
    save_corpus(&corpus, dir).unwrap();
    let mut config = Config::default();
    config.corpus.path = Some(dir.to_path_buf());
    config.batch.b_l = 6;
    config.batch.b_u = 6;
    (config, Arc::new(ground_truth_map(&corpus).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let request = match body {
        Some(v) => request.body(Body::from(v.to_string())).unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, mode: &str, config: &Config) -> String {
    let (status, info) = call(app, "POST", "/sessions", Some(json!({ "mode": mode, "config": config }))).await;
    assert_eq!(status, StatusCode::CREATED, "{info}");
    info["id"].as_str().unwrap().to_string()
}

async fn next(app: &Router, id: &str, checker: &str) -> Next {
    let (status, body) = call(app, "GET", &format!("/sessions/{id}/next?checker={checker}"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    serde_json::from_value(body).unwrap()
}

async fn answer(app: &Router, id: &str, checker: &str, screen: &str, answer: &Answer) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/answer"), Some(json!({ "checker": checker, "screen_id": screen, "answer": answer }))).await
}

fn checkers(truth: &Truth, n: usize) -> Vec<(String, SimChecker)> {
    (0..n).map(|i| (format!("sim-{}", i + 1), SimChecker::new(truth.clone(), 0.0, i as u64))).collect()
}

/// The harness driving loop, over HTTP. Stops after `limit` answers.
async fn drive(app: &Router, id: &str, sims: &mut [(String, SimChecker)], limit: usize) -> usize {
    let mut answered = 0;
    loop {
        let mut progressed = false;
        for (name, sim) in sims.iter_mut() {
            while let Next::Screen(screen) = next(app, id, name).await {
                if answered == limit {
                    return answered;
                }
                let (status, ack) = answer(app, id, name, &screen.id, &sim.answer(&screen)).await;
                assert_eq!(status, StatusCode::OK, "{ack}");
                answered += 1;
                progressed = true;
            }
        }
        if matches!(next(app, id, &sims[0].0).await, Next::Done) {
            return answered;
        }
        assert!(progressed, "session stalled");
    }
}

async fn report(app: &Router, id: &str) -> Report {
    let (status, body) = call(app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(body).unwrap()
}

async fn first_screen(app: &Router, id: &str, checker: &str) -> Screen {
    match next(app, id, checker).await {
        Next::Screen(s) => *s,
        other => panic!("expected a screen, got {other:?}"),
    }
}

#[tokio::test]
async fn unknown_session_is_404() {
    let app = router(Arc::new(Store::in_memory()));
    for (method, uri) in [("GET", "/sessions/nope/next?checker=a"), ("GET", "/sessions/nope/report"), ("GET", "/sessions/nope/events")] {
        let (status, body) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"], "not_found");
    }
    let (status, _) = answer(&app, "nope", "a", "x", &Answer::Accept { candidate: 0 }).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_session_requests_are_rejected() {
    let app = router(Arc::new(Store::in_memory()));
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "overrides": ["batch.nonsense=1"] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "colour": "red" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({ "overrides": ["corpus.profile=\"huge\""] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({ "mode": "manual" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
}

#[tokio::test]
async fn api_session_matches_the_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let (config, truth) = tiny_config(dir.path());
    let app = router(Arc::new(Store::in_memory()));
    let id = create(&app, "scrutinizer", &config).await;

    let (status, list) = call(&app, "GET", "/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[0]["id"], id.as_str());
    assert_eq!(list[0]["claims"], 18);

    let mut sims = checkers(&truth, config.checkers.count);
    drive(&app, &id, &mut sims, usize::MAX).await;
    let via_api = report(&app, &id).await;
    assert_eq!(via_api.pending, 0);

    let corpus = Arc::new(claimcheck_core::corpus::load_corpus(dir.path()).unwrap());
    let (_, session) = simulate(corpus, Mode::Scrutinizer, &config, 0).unwrap();
    assert_eq!(via_api, session.unwrap().report());
}

#[tokio::test]
async fn answers_are_idempotent_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let (config, truth) = tiny_config(dir.path());
    let app = router(Arc::new(Store::in_memory()));
    let id = create(&app, "sequential", &config).await;
    let mut sim = SimChecker::new(truth, 0.0, 0);

    let screen = first_screen(&app, &id, "ann").await;
    let reply = sim.answer(&screen);
    let (status, first) = answer(&app, &id, "ann", &screen.id, &reply).await;
    assert_eq!(status, StatusCode::OK);
    let (status, again) = answer(&app, &id, "ann", &screen.id, &reply).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first, again);

    let different = Answer::Property { selected: vec![], suggested: vec!["made up".into()] };
    let (status, body) = answer(&app, &id, "ann", &screen.id, &different).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert_eq!(body["error"], "conflict");

    let following = first_screen(&app, &id, "ann").await;
    let (status, body) = answer(&app, &id, "ann", "b99-c0-s0", &sim.answer(&following)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "out_of_order");
    assert_eq!(body["expected"], following.id.as_str());

    let charged: f64 = report(&app, &id).await.total_cost;
    let (_, events) = call(&app, "GET", &format!("/sessions/{id}/events"), None).await;
    let answered = events.as_array().unwrap().iter().filter(|e| e["action"] == "answered").count();
    assert_eq!(answered, 1, "the resubmission must not be logged twice");
    assert!(charged > 0.0);
}

#[tokio::test]
async fn malformed_query_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let (config, truth) = tiny_config(dir.path());
    let app = router(Arc::new(Store::in_memory()));
    let id = create(&app, "scrutinizer", &config).await;
    let mut sim = SimChecker::new(truth, 0.0, 0);

    let mut screen = first_screen(&app, &id, "ann").await;
    let (status, body) = answer(&app, &id, "ann", &screen.id, &Answer::Accept { candidate: 0 }).await;
    if matches!(screen.content, ScreenContent::Property { .. }) {
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(body["error"], "malformed");
    }
    while matches!(screen.content, ScreenContent::Property { .. }) {
        let (status, _) = answer(&app, &id, "ann", &screen.id, &sim.answer(&screen)).await;
        assert_eq!(status, StatusCode::OK);
        screen = first_screen(&app, &id, "ann").await;
    }
    let broken = QuerySuggestion { expression: "(a.x + ".into(), relations: vec![], key_values: vec![], attributes: vec![], definitions: Default::default() };
    let (status, body) = answer(&app, &id, "ann", &screen.id, &Answer::Suggest { query: broken }).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(body["error"], "malformed");
    assert!(body["position"].as_u64().is_some(), "{body}");

    // a rejected answer leaves the screen open
    let (status, _) = answer(&app, &id, "ann", &screen.id, &sim.answer(&screen)).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn restart_replays_without_double_charging() {
    let corpus_dir = tempfile::tempdir().unwrap();
    let state = tempfile::tempdir().unwrap();
    let (config, truth) = tiny_config(corpus_dir.path());

    let (id, before, events_before) = {
        let app = router(Arc::new(Store::open(state.path()).unwrap()));
        let id = create(&app, "scrutinizer", &config).await;
        let mut sims = checkers(&truth, config.checkers.count);
        let n = drive(&app, &id, &mut sims, 40).await;
        assert_eq!(n, 40);
        let (_, events) = call(&app, "GET", &format!("/sessions/{id}/events"), None).await;
        (id.clone(), report(&app, &id).await, events)
    };

    // simulate a write torn by a crash
    let log = state.path().join(&id).join("events.jsonl");
    let mut bytes = std::fs::read(&log).unwrap();
    let intact = bytes.len();
    bytes.extend_from_slice(b"{\"at_ms\":1,\"seq\":");
    std::fs::write(&log, bytes).unwrap();

    let app = router(Arc::new(Store::open(state.path()).unwrap()));
    assert_eq!(std::fs::metadata(&log).unwrap().len() as usize, intact);
    let after = report(&app, &id).await;
    assert_eq!(before, after);
    let (_, events_after) = call(&app, "GET", &format!("/sessions/{id}/events"), None).await;
    assert_eq!(events_before, events_after);
    assert_eq!(read_log(&log).unwrap().0.len(), events_after.as_array().unwrap().len());

    // a second session gets a fresh id, and the first one can be finished
    let other = create(&app, "sequential", &config).await;
    assert_ne!(other, id);
    let mut sims = checkers(&truth, config.checkers.count);
    // the simulated checkers are stateless apart from their error draws, which are off here
    drive(&app, &id, &mut sims, usize::MAX).await;
    let finished = report(&app, &id).await;
    assert_eq!(finished.pending, 0);

    let corpus = Arc::new(claimcheck_core::corpus::load_corpus(corpus_dir.path()).unwrap());
    let (_, session) = simulate(corpus, Mode::Scrutinizer, &config, 0).unwrap();
    assert_eq!(finished, session.unwrap().report());
}
