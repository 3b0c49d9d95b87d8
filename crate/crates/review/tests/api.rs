use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use ethnocode_core::coder::{write_predictions, Prediction};
use ethnocode_core::corpus::{save_corpus, TableConfig, UnitKey};
use ethnocode_core::synth::demo_corpus;
use ethnocode_review::log::LOG_FILE;
use ethnocode_review::{app, load_projects, Projects};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const CODE: &str = "Medical Test";

/// A project whose "Medical Test" queue holds five uncoded units with
/// scores .9, .8, .7, .6, .55.
fn fixture(root: &Path) -> Vec<UnitKey> {
    let dir = root.join("demo");
    fs::create_dir_all(&dir).unwrap();
    let corpus = demo_corpus(8, 12, 3);
    save_corpus(&corpus, &dir.join("corpus.csv"), &TableConfig::default()).unwrap();
    let uncoded: Vec<UnitKey> = corpus.units().iter().filter(|u| !u.is_human_coded()).map(|u| u.key()).collect();
    let scores = [0.9, 0.8, 0.7, 0.6, 0.55, 0.3, 0.1];
    let predictions: Vec<Prediction> = uncoded
        .iter()
        .zip(scores)
        .map(|(k, s)| Prediction {
            unit: k.clone(),
            code: CODE.into(),
            score: s,
            predicted: s >= 0.5,
        })
        .collect();
    write_predictions(&predictions, fs::File::create(dir.join("predictions.csv")).unwrap()).unwrap();
    fs::write(dir.join("project.json"), r#"{"codes": ["Medical Test", "Social Support"], "snapshot_every": 4}"#).unwrap();
    uncoded[..5].to_vec()
}

fn router(root: &Path) -> (Router, Projects) {
    let projects: Projects = Arc::new(load_projects(root).unwrap());
    (app(projects.clone(), Some(root.join("ui"))), projects)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn decision(unit: &UnitKey, decision: &str, reviewer: &str) -> Value {
    json!({
        "unit": {"document": unit.doc_id, "reference": unit.reference},
        "code": CODE,
        "decision": decision,
        "reviewer": reviewer,
    })
}

fn queue_uri() -> String {
    "/api/v1/projects/demo/queue?code=Medical%20Test".into()
}

fn log_lines(root: &Path) -> usize {
    fs::read_to_string(root.join("demo").join(LOG_FILE)).unwrap().lines().count()
}

#[tokio::test]
async fn queue_is_score_ordered_with_context() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, _) = router(root.path());
    let (status, page) = call(&app, Method::GET, &queue_uri(), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["total"], 5);
    assert_eq!(page["pending"], 5);
    let items = page["items"].as_array().unwrap();
    let scores: Vec<f64> = items.iter().map(|i| i["score"].as_f64().unwrap()).collect();
    assert_eq!(scores, [0.9, 0.8, 0.7, 0.6, 0.55]);
    assert_eq!(items[0]["unit"]["document"], units[0].doc_id.as_str());
    let context = items[0]["context"].as_array().unwrap();
    assert!((1..=3).contains(&context.len()));
    assert_eq!(context.iter().filter(|c| c["target"] == true).count(), 1);
    assert!(!items[0]["text"].as_str().unwrap().is_empty());

    let (_, page) = call(&app, Method::GET, &format!("{}&limit=2&offset=1", queue_uri()), None).await;
    assert_eq!(page["items"].as_array().unwrap().len(), 2);
    assert_eq!(page["items"][0]["score"], 0.8);
}

#[tokio::test]
async fn decisions_are_idempotent_and_counted() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, _) = router(root.path());
    let uri = "/api/v1/projects/demo/decisions";

    let (status, ack) = call(&app, Method::POST, uri, Some(decision(&units[0], "accept", "ann"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["duplicate"], false);
    assert_eq!(ack["pending"], 4);
    let seq = ack["seq"].clone();
    let lines = log_lines(root.path());

    let (status, again) = call(&app, Method::POST, uri, Some(decision(&units[0], "accept", "ann"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["seq"], seq);
    assert_eq!(again["duplicate"], true);
    assert_eq!(log_lines(root.path()), lines);

    for u in &units[1..3] {
        call(&app, Method::POST, uri, Some(decision(u, "accept", "ann"))).await;
    }
    let (_, page) = call(&app, Method::GET, &format!("{}&status=pending", queue_uri()), None).await;
    assert_eq!(page["pending"], 2);
    assert_eq!(page["items"].as_array().unwrap().len(), 2);

    // undo supersedes with a new entry
    let (_, undo) = call(&app, Method::POST, uri, Some(decision(&units[0], "pending", "ann"))).await;
    assert!(undo["seq"].as_u64().unwrap() > seq.as_u64().unwrap());
    assert_eq!(undo["pending"], 3);
    assert_eq!(log_lines(root.path()), lines + 3);
}

#[tokio::test]
async fn error_statuses() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, _) = router(root.path());
    let uri = "/api/v1/projects/demo/decisions";

    let (s, body) = call(&app, Method::GET, "/api/v1/projects/nope/queue?code=X", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_project");
    let (s, _) = call(&app, Method::GET, "/api/v1/projects/demo/queue?code=Nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, Method::GET, "/api/v1/projects/demo/metrics?code=Nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, Method::GET, "/api/v1/projects/demo/jobs/job-99", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let coded = UnitKey::new(units[0].doc_id.replace("402", "400"), 0);
    let (s, body) = call(&app, Method::POST, uri, Some(decision(&coded, "accept", "ann"))).await;
    assert_eq!(s, StatusCode::CONFLICT, "{body}");
    assert_eq!(body["error"], "not_queued");

    let (s, _) = call(&app, Method::POST, uri, Some(json!({"code": CODE}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::POST, uri, Some(decision(&units[0], "maybe", "ann"))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from("{not json")).unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::POST, uri, Some(decision(&units[0], "accept", " "))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::GET, "/api/v1/projects/demo/queue", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::GET, "/api/v1/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn lease_blocks_second_reviewer() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, _) = router(root.path());
    let uri = "/api/v1/projects/demo/decisions";
    assert_eq!(call(&app, Method::POST, uri, Some(decision(&units[0], "accept", "ann"))).await.0, StatusCode::OK);
    let (s, body) = call(&app, Method::POST, uri, Some(decision(&units[1], "reject", "bob"))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"], "lease_held");
    let (_, released) = call(&app, Method::DELETE, "/api/v1/projects/demo/lease?code=Medical%20Test&reviewer=ann", None).await;
    assert_eq!(released["released"], true);
    assert_eq!(call(&app, Method::POST, uri, Some(decision(&units[1], "reject", "bob"))).await.0, StatusCode::OK);
}

#[tokio::test]
async fn metrics_follow_decisions() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, _) = router(root.path());
    let uri = "/api/v1/projects/demo/decisions";
    call(&app, Method::POST, uri, Some(decision(&units[0], "accept", "ann"))).await;
    call(&app, Method::POST, uri, Some(decision(&units[1], "reject", "ann"))).await;
    let (s, m) = call(&app, Method::GET, "/api/v1/projects/demo/metrics?code=Medical%20Test", None).await;
    assert_eq!(s, StatusCode::OK);
    let r = &m["review"];
    assert_eq!((r["total"].clone(), r["pending"].clone(), r["accepted"].clone(), r["rejected"].clone()), (json!(5), json!(3), json!(1), json!(1)));
    assert_eq!(r["accept_rate"], 0.5);
    assert_eq!(r["progress"], 0.4);
    // one accept plus three pending at a 50% accept rate: 2.5 / 4
    assert_eq!(r["post_review_precision"], 0.625);
    let (_, empty) = call(&app, Method::GET, "/api/v1/projects/demo/metrics?code=Social%20Support", None).await;
    assert_eq!(empty["review"]["total"], 0);
    assert_eq!(empty["review"]["precision_by_convention"], true);
}

#[tokio::test]
async fn state_survives_restart() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let before = {
        let (app, projects) = router(root.path());
        for (i, u) in units.iter().enumerate() {
            let d = if i % 2 == 0 { "accept" } else { "reject" };
            call(&app, Method::POST, "/api/v1/projects/demo/decisions", Some(decision(u, d, "ann"))).await;
        }
        projects["demo"].state()
    };
    let (_, projects) = router(root.path());
    assert_eq!(projects["demo"].state(), before);
}

#[tokio::test]
async fn retrain_swaps_in_a_new_version() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, projects) = router(root.path());
    let uri = "/api/v1/projects/demo/decisions";
    call(&app, Method::POST, uri, Some(decision(&units[0], "accept", "ann"))).await;
    call(&app, Method::POST, uri, Some(decision(&units[1], "reject", "ann"))).await;

    let (s, body) = call(&app, Method::POST, "/api/v1/projects/demo/retrain", Some(json!({"code": CODE}))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let job = body["job"].as_str().unwrap().to_string();
    let mut status = Value::Null;
    for _ in 0..200 {
        status = call(&app, Method::GET, &format!("/api/v1/projects/demo/jobs/{job}"), None).await.1;
        if status["status"] != "running" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(status["status"], "succeeded", "{status}");
    assert_eq!(status["version"], 2);

    let state = projects["demo"].state();
    let code = &state.codes[CODE];
    assert_eq!(code.version, 2);
    assert!(code.item(&units[0]).is_none() && code.item(&units[1]).is_none());
    assert_eq!(code.history.len(), 2);
    assert!(code.report.is_some());
    let (_, m) = call(&app, Method::GET, "/api/v1/projects/demo/metrics?code=Medical%20Test", None).await;
    assert_eq!(m["version"], 2);

    let (s, _) = call(&app, Method::POST, "/api/v1/projects/demo/retrain", Some(json!({"code": "Nope"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn merge_requires_complete_review() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, _) = router(root.path());
    let merge = "/api/v1/projects/demo/merge";
    let (s, body) = call(&app, Method::POST, merge, Some(json!({"code": CODE}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"], "incomplete_review");
    for (i, u) in units.iter().enumerate() {
        let d = if i < 3 { "accept" } else { "reject" };
        call(&app, Method::POST, "/api/v1/projects/demo/decisions", Some(decision(u, d, "ann"))).await;
    }
    let (s, report) = call(&app, Method::POST, merge, Some(json!({"code": CODE}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((report["accepted"].clone(), report["rejected"].clone()), (json!(3), json!(2)));
    let merged = ethnocode_core::corpus::load_corpus(&root.path().join("demo/merged.csv"), &TableConfig::default()).unwrap();
    let coded: BTreeMap<UnitKey, bool> = units.iter().map(|u| (u.clone(), merged.unit(u).unwrap().codes.contains(CODE))).collect();
    assert_eq!(coded.values().filter(|v| **v).count(), 3);
    assert!(coded[&units[0]] && !coded[&units[4]]);
}

#[tokio::test]
async fn concurrent_posts_get_distinct_increasing_seqs() {
    let root = tempfile::tempdir().unwrap();
    let units = fixture(root.path());
    let (app, _) = router(root.path());
    let mut handles = Vec::new();
    for (i, u) in units.iter().enumerate() {
        for d in ["accept", "reject"] {
            let app = app.clone();
            let body = decision(u, d, "ann");
            handles.push(tokio::spawn(async move {
                let _ = i;
                call(&app, Method::POST, "/api/v1/projects/demo/decisions", Some(body)).await
            }));
        }
    }
    for h in handles {
        assert_eq!(h.await.unwrap().0, StatusCode::OK);
    }
    let log = fs::read_to_string(root.path().join("demo").join(LOG_FILE)).unwrap();
    let seqs: Vec<u64> = log.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
}

#[tokio::test]
async fn serves_ui_bundle() {
    let root = tempfile::tempdir().unwrap();
    fixture(root.path());
    fs::create_dir_all(root.path().join("ui")).unwrap();
    fs::write(root.path().join("ui/index.html"), "<html>review</html>").unwrap();
    let (app, _) = router(root.path());
    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>review</html>");
    let (s, list) = call(&app, Method::GET, "/api/v1/projects", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list[0]["id"], "demo");
}
