//! Recorder endpoints driven in-process.

use std::path::PathBuf;
use std::time::Duration;

use adaptagent::demostore::{load, validate, Annotator};
use adaptagent::domkit::DEFAULT_K;
use adaptagent::layout::DEFAULT_VIEWPORT;
use adaptagent::observation::observe;
use adaptagent::webenv::{generate_corpus, oracle_trajectory, reset, Action, Corpus};
use adaptagent_recorder::{router, AppState, RecorderConfig};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus() -> Corpus {
    generate_corpus(17, 1, 2, 3)
}

fn app(corpus: &Corpus, config: RecorderConfig) -> Router {
    router(AppState::new(corpus.clone(), config))
}

async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call_raw(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

/// A task needing at least two steps, so termination happens mid-session.
fn multi_step_task(corpus: &Corpus) -> (String, String) {
    let (site, task) = corpus
        .sites()
        .flat_map(|s| s.tasks.iter().map(move |t| (s, t)))
        .find(|(_, t)| t.oracle_len >= 2)
        .unwrap();
    (site.site_id.clone(), task.task_id.clone())
}

async fn create(app: &Router, site: &str, task: &str) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({"site_id": site, "task_id": task}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn corpus_listing_covers_every_task() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = call(&app(&corpus, RecorderConfig::new(dir.path())), "GET", "/corpus", None).await;
    assert_eq!(status, StatusCode::OK);
    let listed: usize = body["sites"].as_array().unwrap().iter().map(|s| s["tasks"].as_array().unwrap().len()).sum();
    assert_eq!(listed, corpus.tasks().count());
    assert_eq!(body["corpus_digest"], format!("{:016x}", corpus.digest()));
}

#[tokio::test]
async fn recorded_session_yields_a_valid_demo() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, RecorderConfig::new(dir.path()));
    let (site_id, task_id) = multi_step_task(&corpus);
    let (site, task) = corpus.find_task(&task_id).unwrap();
    let id = create(&app, &site_id, &task_id).await;

    let (status, text) = call_raw(&app, "GET", &format!("/sessions/{id}/observation"), None).await;
    assert_eq!(status, StatusCode::OK);
    let expected = observe(site, &reset(site, task).unwrap(), &task.instruction, DEFAULT_K, DEFAULT_VIEWPORT).unwrap();
    assert!(text.contains(&format!("\"observation\":{}", serde_json::to_string(&expected).unwrap())));
    let body: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(body["status"], "ACTIVE");

    let gold = oracle_trajectory(site, task).unwrap();
    let mut last = Value::Null;
    for action in gold.actions() {
        let (status, body) =
            call(&app, "POST", &format!("/sessions/{id}/action"), Some(serde_json::to_value(action).unwrap())).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        last = body;
    }
    assert_eq!(last["terminated"], true);
    assert_eq!(last["success"], true);
    assert_eq!(last["status"], "SUCCEEDED");

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "SUCCEEDED");
    let path = PathBuf::from(body["path"].as_str().unwrap());
    assert!(path.starts_with(dir.path()));
    let record = load(&path).unwrap();
    assert_eq!(record.annotator, Annotator::Human);
    assert_eq!(record.trajectory().steps, gold.steps);
    assert!(validate(&record, &corpus).unwrap().is_ok());
}

#[tokio::test]
async fn action_after_termination_conflicts() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, RecorderConfig::new(dir.path()));
    let (site_id, task_id) = multi_step_task(&corpus);
    let (site, task) = corpus.find_task(&task_id).unwrap();
    let id = create(&app, &site_id, &task_id).await;
    let gold = oracle_trajectory(site, task).unwrap();
    for action in gold.actions() {
        call(&app, "POST", &format!("/sessions/{id}/action"), Some(serde_json::to_value(action).unwrap())).await;
    }
    let again = serde_json::to_value(gold.actions().next().unwrap()).unwrap();
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/action"), Some(again)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "AlreadyTerminated");
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, RecorderConfig::new(dir.path()));
    for (method, uri) in [
        ("GET", "/sessions/nope/observation"),
        ("POST", "/sessions/nope/finish"),
    ] {
        let (status, body) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"], "UnknownSession");
    }
    let (status, _) = call(&app, "POST", "/sessions/nope/action", Some(json!({"element_id": "e0", "operation": "CLICK"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let site = corpus.sites().next().unwrap().site_id.clone();
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"site_id": site, "task_id": "missing"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownTask");
}

#[tokio::test]
async fn invalid_actions_name_the_env_error() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, RecorderConfig::new(dir.path()));
    let (site_id, task_id) = multi_step_task(&corpus);
    let id = create(&app, &site_id, &task_id).await;
    let (status, body) =
        call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({"element_id": "ghost", "operation": "CLICK"})))
            .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "InvalidElement");

    let (_, view) = call(&app, "GET", &format!("/sessions/{id}/observation"), None).await;
    let (site, _) = corpus.find_task(&task_id).unwrap();
    let page = site.page(view["observation"]["page_id"].as_str().unwrap()).unwrap();
    let text = page.elements.iter().find(|e| !e.hidden && e.target.is_none() && e.tag.as_str() != "input").unwrap();
    let typed = Action::type_text(text.element_id.clone(), "x");
    let (status, body) =
        call(&app, "POST", &format!("/sessions/{id}/action"), Some(serde_json::to_value(typed).unwrap())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "InvalidOperation");
    assert_eq!(view["steps_taken"], 0);

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({"operation": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "BadRequest");
}

#[tokio::test]
async fn unfinished_session_is_abandoned() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, RecorderConfig::new(dir.path()));
    let (site_id, task_id) = multi_step_task(&corpus);
    let id = create(&app, &site_id, &task_id).await;
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ABANDONED");
    assert!(body["path"].is_null());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({"element_id": "e0", "operation": "CLICK"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn expired_sessions_disappear() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let config = RecorderConfig {
        ttl: Duration::ZERO,
        ..RecorderConfig::new(dir.path())
    };
    let app = app(&corpus, config);
    let (site_id, task_id) = multi_step_task(&corpus);
    let id = create(&app, &site_id, &task_id).await;
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/observation"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
