use std::time::Duration;

use axum::body::Body as HttpBody;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mats_core::{delta_from_tau2, AnalysisReport, CalibrationResult, McmcSettings, Scenario};
use mats_service::{router, AppState, ErrorBody, JobStatus, JobStore, ScenarioRef, SimulationJob, SimulationRequest};
use serde_json::{json, Value};
use tower::ServiceExt;

fn quick_settings() -> Value {
    json!({ "n_iterations": 300, "burn_in": 200 })
}

fn app() -> Router {
    router(AppState::new(JobStore::in_memory(), 2))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            HttpBody::from(v.to_string())
        }
        None => HttpBody::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn wait_for(app: &Router, id: &str) -> SimulationJob {
    for _ in 0..1200 {
        let (status, body) = call(app, Method::GET, &format!("/api/v1/simulations/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let job: SimulationJob = serde_json::from_value(body).unwrap();
        if job.status.is_terminal() {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

async fn submit(app: &Router, body: Value) -> String {
    let (status, v) = call(app, Method::POST, "/api/v1/simulations", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn valid_request_is_accepted_with_an_id() {
    let app = app();
    let id = submit(
        &app,
        json!({ "scenario": "GN", "n_replicates": 2, "settings": quick_settings() }),
    )
    .await;
    assert!(!id.is_empty());
    let job = wait_for(&app, &id).await;
    assert_eq!(job.status, JobStatus::Done);
    assert_eq!(job.progress, 1.0);
    let oc = job.result.unwrap();
    assert_eq!(oc.scenario, "GN");
    assert_eq!(oc.n_replicates, 2);
}

#[tokio::test]
async fn freshly_queued_job_reports_zero_progress() {
    let store = JobStore::in_memory();
    let req: SimulationRequest = serde_json::from_value(json!({ "scenario": "GN" })).unwrap();
    let id = store.insert(req).unwrap();
    let app = router(AppState::new(store, 1));
    let (status, v) = call(&app, Method::GET, &format!("/api/v1/simulations/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "queued");
    assert_eq!(v["progress"], 0.0);
    assert!(v.get("result").is_none());
}

#[tokio::test]
async fn zero_replicates_is_rejected() {
    let (status, v) = call(
        &app(),
        Method::POST,
        "/api/v1/simulations",
        Some(json!({ "scenario": "GN", "n_replicates": 0 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "n_replicates must be ≥ 1");
    assert_eq!(v["fields"][0]["field"], "n_replicates");
}

#[tokio::test]
async fn invalid_reference_rate_gives_field_errors() {
    let mut config = serde_json::to_value(mats_core::ModelConfig::default()).unwrap();
    config["reference_rates"][1] = json!(1.2);
    let (status, v) = call(
        &app(),
        Method::POST,
        "/api/v1/simulations",
        Some(json!({ "scenario": "GN", "config": config })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let body: ErrorBody = serde_json::from_value(v).unwrap();
    assert!(
        body.fields.iter().any(|f| f.field.starts_with("reference_rates")),
        "{body:?}"
    );
}

#[tokio::test]
async fn unknown_builtin_scenario_and_malformed_json_are_bad_requests() {
    let app = app();
    let (status, v) = call(
        &app,
        Method::POST,
        "/api/v1/simulations",
        Some(json!({ "scenario": "nope" })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("nope"));

    let req = Request::builder()
        .method(Method::POST)
        .uri("/api/v1/simulations")
        .header(header::CONTENT_TYPE, "application/json")
        .body(HttpBody::from("{\"scenario\":"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body: ErrorBody = serde_json::from_slice(&bytes).unwrap();
    assert!(!body.error.is_empty());
}

#[tokio::test]
async fn unknown_job_is_not_found() {
    let (status, v) = call(&app(), Method::GET, "/api/v1/simulations/does-not-exist", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("does-not-exist"));
}

#[tokio::test(flavor = "multi_thread")]
async fn duplicate_submissions_get_distinct_ids_and_equal_results() {
    let app = app();
    let body = json!({ "scenario": "Pick-H-Partial", "n_replicates": 6, "seed": 9, "settings": quick_settings() });
    let a = submit(&app, body.clone()).await;
    let b = submit(&app, body).await;
    assert_ne!(a, b);
    let (ja, jb) = (wait_for(&app, &a).await, wait_for(&app, &b).await);
    assert_eq!(ja.status, JobStatus::Done);
    assert_eq!(ja.result, jb.result);
    assert!(ja.result.is_some());
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_scenario_file_fails_the_job() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"name":"bad","true_rates":[[0.3,0.3],[0.2,0.2]]}"#).unwrap();
    let app = app();
    let id = submit(&app, json!({ "scenario": { "file": path }, "n_replicates": 2 })).await;
    let job = wait_for(&app, &id).await;
    assert_eq!(job.status, JobStatus::Failed);
    assert!(job.result.is_none());
    assert!(job.error.unwrap().contains("true_rates"));

    let missing = submit(
        &app,
        json!({ "scenario": { "file": dir.path().join("absent.json") }, "n_replicates": 2 }),
    )
    .await;
    let job = wait_for(&app, &missing).await;
    assert_eq!(job.status, JobStatus::Failed);
}

#[tokio::test(flavor = "multi_thread")]
async fn inline_and_file_scenarios_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.json");
    std::fs::write(
        &path,
        r#"{"name":"custom","true_rates":[[0.45,0.2,0.1,0.5],[0.45,0.1,0.1,0.3]]}"#,
    )
    .unwrap();
    let app = app();
    let from_file = submit(
        &app,
        json!({ "scenario": { "file": path }, "n_replicates": 3, "settings": quick_settings() }),
    )
    .await;
    let inline = submit(
        &app,
        json!({
            "scenario": { "name": "custom", "true_rates": [[0.45,0.2,0.1,0.5],[0.45,0.1,0.1,0.3]] },
            "n_replicates": 3,
            "settings": quick_settings()
        }),
    )
    .await;
    let (a, b) = (wait_for(&app, &from_file).await, wait_for(&app, &inline).await);
    assert_eq!(a.status, JobStatus::Done, "{:?}", a.error);
    assert_eq!(a.result, b.result);
    assert!(matches!(a.request.scenario, ScenarioRef::File { .. }));
    assert!(matches!(b.request.scenario, ScenarioRef::Inline(_)));
}

#[tokio::test(flavor = "multi_thread")]
async fn completed_results_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, result) = {
        let app = router(AppState::new(JobStore::open(dir.path()).unwrap(), 1));
        let id = submit(
            &app,
            json!({ "scenario": "GA-NS", "n_replicates": 4, "settings": quick_settings() }),
        )
        .await;
        let job = wait_for(&app, &id).await;
        assert_eq!(job.status, JobStatus::Done);
        (id, job.result.unwrap())
    };
    let pending = {
        let store = JobStore::open(dir.path()).unwrap();
        store
            .insert(serde_json::from_value(json!({ "scenario": "GN" })).unwrap())
            .unwrap()
    };

    let app = router(AppState::new(JobStore::open(dir.path()).unwrap(), 1));
    let (status, v) = call(&app, Method::GET, &format!("/api/v1/simulations/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let job: SimulationJob = serde_json::from_value(v).unwrap();
    assert_eq!(job.status, JobStatus::Done);
    assert_eq!(job.result.unwrap(), result);

    let interrupted = wait_for(&app, &pending).await;
    assert_eq!(interrupted.status, JobStatus::Failed);
    assert_eq!(interrupted.error.as_deref(), Some(mats_service::jobs::INTERRUPTED));

    let (_, list) = call(&app, Method::GET, "/api/v1/simulations", None).await;
    let ids: Vec<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|j| j["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, [id.as_str(), pending.as_str()]);
}

#[tokio::test]
async fn analyze_rejects_more_responders_than_patients() {
    let body = json!({
        "data": {
            "stage1": [{"responders": 21, "enrolled": 20}, {"responders": 3, "enrolled": 20},
                       {"responders": 3, "enrolled": 20}, {"responders": 3, "enrolled": 20}],
            "stage1_decisions": [false, false, false, false],
            "stage2": [null, null, null, null]
        },
        "stage": "interim"
    });
    let (status, v) = call(&app(), Method::POST, "/api/v1/analyze", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    assert!(!v["fields"].as_array().unwrap().is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn analyze_returns_a_report() {
    let body = json!({
        "data": {
            "stage1": [{"responders": 2, "enrolled": 20}, {"responders": 12, "enrolled": 20},
                       {"responders": 3, "enrolled": 20}, {"responders": 11, "enrolled": 20}],
            "stage1_decisions": [false, false, false, false],
            "stage2": [null, null, null, null]
        },
        "stage": "interim",
        "settings": { "n_iterations": 2000, "burn_in": 1000 },
        "seed": 5
    });
    let (status, v) = call(&app(), Method::POST, "/api/v1/analyze", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let report: AnalysisReport = serde_json::from_value(v).unwrap();
    assert_eq!(report.seed, 5);
    assert_eq!(report.decisions.go_stage1, vec![false, true, false, true]);

    let (_, again) = call(&app(), Method::POST, "/api/v1/analyze", Some(body)).await;
    assert_eq!(serde_json::from_value::<AnalysisReport>(again).unwrap(), report);
}

#[tokio::test]
async fn final_analysis_without_stage2_is_a_bad_request() {
    let body = json!({
        "data": {
            "stage1": [{"responders": 2, "enrolled": 20}, {"responders": 2, "enrolled": 20},
                       {"responders": 3, "enrolled": 20}, {"responders": 1, "enrolled": 20}],
            "stage1_decisions": [false, false, false, false],
            "stage2": [null, null, null, null]
        },
        "stage": "final"
    });
    let (status, _) = call(&app(), Method::POST, "/api/v1/analyze", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn calibration_picks_the_largest_feasible_tau2() {
    let (status, v) = call(
        &app(),
        Method::POST,
        "/api/v1/calibrate-tau2",
        Some(json!({ "delta": 0.1, "p2": [0.3, 0.4, 0.5] })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["tau2"], 0.4);
    let result: CalibrationResult = serde_json::from_value(v).unwrap();
    assert_eq!(result.table.len(), 15);

    let (status, v) = call(
        &app(),
        Method::POST,
        "/api/v1/calibrate-tau2",
        Some(json!({ "delta": 0.5, "p2": [0.1] })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["tau2"].as_f64().unwrap() > 0.4);

    let (status, _) = call(
        &app(),
        Method::POST,
        "/api/v1/calibrate-tau2",
        Some(json!({ "delta": 0.1, "p2": [1.5] })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn scenarios_lists_the_eight_builtins() {
    let (status, v) = call(&app(), Method::GET, "/api/v1/scenarios", None).await;
    assert_eq!(status, StatusCode::OK);
    let list: Vec<Scenario> = serde_json::from_value(v).unwrap();
    let names: Vec<&str> = list.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "GN",
            "GA-NS",
            "GA-S",
            "Pick-H-All",
            "Pick-H-Partial",
            "Pick-L-Partial",
            "Mixed",
            "Intermediate"
        ]
    );
    assert_eq!(list[0].true_rates, vec![vec![0.1, 0.2, 0.1, 0.2]; 2]);
}

#[tokio::test]
async fn curves_match_the_closed_form() {
    let (status, v) = call(
        &app(),
        Method::GET,
        "/api/v1/curves?tau2=0.4,0.8&p2min=0.3&p2max=0.5&p2step=0.1",
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let points = v.as_array().unwrap();
    assert_eq!(points.len(), 6);
    for p in points {
        let (tau2, p2, delta) = (
            p["tau2"].as_f64().unwrap(),
            p["p2"].as_f64().unwrap(),
            p["delta"].as_f64().unwrap(),
        );
        let e = tau2.exp();
        let expect = p2 * e / (1.0 - p2 + p2 * e) - p2;
        assert!((delta - expect).abs() < 1e-12);
        assert!((delta - delta_from_tau2(tau2, p2).unwrap()).abs() < 1e-15);
    }

    let (status, _) = call(&app(), Method::GET, "/api/v1/curves?tau2=abc", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app(), Method::GET, "/api/v1/curves?p2min=0.9&p2max=0.1", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = call(&app(), Method::GET, "/api/v1/curves", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 15 * 99);
}

#[tokio::test]
async fn cors_allows_any_origin() {
    let req = Request::builder()
        .uri("/api/v1/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(HttpBody::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

#[test]
fn default_settings_round_trip_inside_requests() {
    let req: SimulationRequest = serde_json::from_value(json!({ "scenario": "GN" })).unwrap();
    assert_eq!(req.settings, McmcSettings::default());
    assert_eq!(req.n_replicates, 1000);
    assert_eq!(req.seed, 42);
}
