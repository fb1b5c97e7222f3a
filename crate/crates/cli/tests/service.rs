use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use discovery_cli::commands::{dispatch, SolveQuery, ENDPOINTS};
use discovery_cli::preset;
use discovery_cli::service::router;
use discovery_core::PassModel;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn post(path: &str, body: String) -> (StatusCode, String) {
    let req = Request::post(path)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let res = router().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn baseline() -> Value {
    serde_json::to_value(preset("baseline").unwrap()).unwrap()
}

#[tokio::test]
async fn solve_returns_equilibrium() {
    let (status, body) = post("/v1/solve", baseline().to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert!((v["equilibrium"]["mu_star"].as_f64().unwrap() - 0.3293775).abs() < 1e-6);
}

#[tokio::test]
async fn solve_query_adds_first_best() {
    let (status, body) = post("/v1/solve?first_best=true", baseline().to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert!((v["bounty"]["b_star"].as_f64().unwrap() - 46.3736).abs() < 1e-3);

    let (status, _) = post("/v1/solve?bogus=1", baseline().to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn bounty_vanishes_at_full_weight() {
    let mut s = baseline();
    s["creator"]["alpha"] = json!(1.0);
    let (status, body) = post("/v1/bounty", s.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["bounty"]["b_star"].as_f64().unwrap(), 0.0);
}

#[tokio::test]
async fn range_violation_is_400_with_pointer() {
    let mut s = baseline();
    s["policy"]["pass_model"]["s"] = json!(0);
    let (status, body) = post("/v1/solve", s.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["error"]["pointer"], "/policy/pass_model/s");
}

#[tokio::test]
async fn malformed_body_is_400_with_position() {
    let (status, body) = post("/v1/solve", "{\n  \"policy\": ".into()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["error"]["line"], 2);
}

#[tokio::test]
async fn ambiguous_equilibrium_is_422() {
    let mut f = preset("baseline").unwrap();
    f.policy.q = 11.0;
    f.policy.pass_model = PassModel::binomial(11, 4);
    let (status, body) = post("/v1/solve", serde_json::to_string(&f).unwrap()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["error"]["code"], "ambiguous_equilibrium");
    assert_eq!(v["error"]["kind"], "domain");
}

#[tokio::test]
async fn service_matches_cli_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, baseline().to_string()).unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_discovery"))
        .args(["solve", "--first-best", "--scenario", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let (_, body) = post("/v1/solve?first_best=true", baseline().to_string()).await;
    assert_eq!(String::from_utf8(out.stdout).unwrap(), body);
}

#[tokio::test]
async fn budget_step_state_round_trips() {
    let req = json!({ "scenario": baseline() });
    let (status, body) = post("/v1/budget/step", req.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let mut state: Value = serde_json::from_str::<Value>(&body).unwrap()["state"].clone();
    let iter0 = state["iter"].as_u64().unwrap();
    for k in 1..=3 {
        let req = json!({ "scenario": baseline(), "state": state });
        let (status, body) = post("/v1/budget/step", req.to_string()).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        state = serde_json::from_str::<Value>(&body).unwrap()["state"].clone();
        assert_eq!(state["iter"].as_u64().unwrap(), iter0 + k);
    }

    // Stepping from a state must match the in-process result byte for byte.
    let req = json!({ "scenario": baseline(), "state": state }).to_string();
    let direct = dispatch("budget/step", &req, &SolveQuery::default()).unwrap();
    let (_, body) = post("/v1/budget/step", req).await;
    assert_eq!(direct, body);
}

#[tokio::test]
async fn every_endpoint_answers() {
    let s = baseline();
    let (_, recs) = post("/v1/telemetry/simulate", json!({"scenario": s, "cohort": {"n": 2000, "prior": {"kind": "uniform", "lo": 0.1, "hi": 0.6}}}).to_string()).await;
    let records: Value = serde_json::from_str(&recs).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 2000);

    let mut thompson = serde_json::to_value(preset("thompson-20").unwrap()).unwrap();
    thompson["engine"]["replications"] = json!(200);
    let bodies = [
        ("solve", s.clone()),
        ("first-best", s.clone()),
        ("bounty", s.clone()),
        ("frontier", json!({"scenario": s, "grid": {"start": 0.1, "stop": 0.3, "step": 0.1}})),
        ("budget/run", json!({"scenario": s})),
        ("budget/step", json!({"scenario": s})),
        ("replay", json!({"scenario": thompson})),
        ("heatmap", json!({"scenario": s, "q_range": [9, 10], "s_range": [2, 3]})),
        ("telemetry/simulate", json!({"scenario": s, "cohort": {"n": 10, "prior": {"kind": "point", "mu": 0.3}}})),
        ("telemetry/fit", json!({"records": records})),
        ("stress", json!({"scenario": s})),
    ];
    assert_eq!(bodies.len(), ENDPOINTS.len());
    for (e, body) in bodies {
        assert!(ENDPOINTS.contains(&e));
        let (status, text) = post(&format!("/v1/{e}"), body.to_string()).await;
        assert_eq!(status, StatusCode::OK, "{e}: {text}");
        assert!(serde_json::from_str::<Value>(&text).is_ok());
    }

    let res = router().oneshot(Request::get("/v1").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
}

#[tokio::test]
async fn unknown_route_is_404() {
    let (status, _) = post("/v1/nope", "{}".into()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[test]
fn openapi_lists_every_endpoint() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/openapi.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    let paths = doc["paths"].as_object().unwrap();
    assert_eq!(paths.len(), ENDPOINTS.len());
    for e in ENDPOINTS {
        let p = &paths[&format!("/v1/{e}")]["post"];
        for code in ["200", "400", "422"] {
            assert!(p["responses"].get(code).is_some(), "{e} {code}");
        }
    }
    for name in ["ScenarioFile", "PassModel", "Error", "BudgetState"] {
        assert!(doc["components"]["schemas"].get(name).is_some());
    }
}
