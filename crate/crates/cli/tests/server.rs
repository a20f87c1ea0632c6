use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use physrec_cli::server::{router, AppState};
use physrec_core::catalog::{generate_synthetic, SyntheticParams};
use physrec_core::kgraph::build_graph;
use physrec_core::thermo::train;
use physrec_core::*;

fn artifacts() -> Artifacts {
    static CACHE: OnceLock<Artifacts> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            let ds = generate_synthetic(SyntheticParams {
                seed: 7,
                n_products: 150,
                n_foods: 40,
                n_users: 40,
                purchases_per_user: 20,
            })
            .unwrap();
            let (g, _) = build_graph(&ds, &EncoderConfig::default(), GraphConfig::default()).unwrap();
            let t = ThermoTargets::for_cohort(&ds, &PhysioParams::default());
            let config = TrainConfig {
                epochs: 6,
                model: ModelConfig { d_emb: 32, ..Default::default() },
                ..Default::default()
            };
            let out = train(&g, &t, &config).unwrap();
            Artifacts::from_parts(ds, g, &out.params, "abc123".into()).unwrap()
        })
        .clone()
}

fn loaded() -> Router {
    router(Arc::new(AppState::loaded(artifacts(), ServiceDefaults::default())))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, bytes.to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn post(app: &Router, body: &Value) -> (StatusCode, Vec<u8>) {
    let req = Request::post("/api/recommend")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(app, req).await
}

fn request(age: i64) -> Value {
    json!({
        "profile": {"age": age, "sex": "female", "weight": 62.0, "height": 166.0,
                    "activity": "light", "goal": "maintenance"},
        "overrides": {"seed": 9}
    })
}

#[tokio::test]
async fn health_before_and_after_loading() {
    let state = Arc::new(AppState::new(ServiceDefaults::default()));
    let app = router(state.clone());
    let (s, body) = get(&app, "/api/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, json!({"ready": false}));
    let (s, b) = post(&app, &request(30)).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE, "{}", String::from_utf8_lossy(&b));

    assert!(state.install(artifacts()));
    let (_, body) = get(&app, "/api/health").await;
    assert_eq!(body["ready"], true);
    assert_eq!(body["products"], 150);
    assert_eq!(body["users"], 40);
    assert_eq!(body["foods"], 40);
    assert_eq!(body["checkpoint_hash"], "abc123");
    assert!(!state.install(artifacts()));
}

#[tokio::test]
async fn config_reports_defaults() {
    let (s, body) = get(&loaded(), "/api/config").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["alpha"], 0.1);
    assert_eq!(body["beta"], 1.0);
    assert_eq!(body["k"], 8);
    assert_eq!(body["tolerance"], 0.12);
    assert_eq!(body["lambda"], 0.03);
    assert_eq!(body["theta_sim"], 0.5);
    assert_eq!(body["quantity_max"], 3);
    assert_eq!(body["iterations"], 5000);
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let app = loaded();
    let (s, b) = post(&app, &request(5)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&b).unwrap();
    let field = &body["fields"][0];
    assert_eq!(field["field"], "profile.age");
    assert!(field["message"].as_str().unwrap().contains("13"), "{field}");

    let (s, _) = post(&app, &json!({"profile": {"age": 30}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let mut extra = request(30);
    extra["overrides"]["gamma"] = json!(1);
    let (s, _) = post(&app, &extra).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let mut big_k = request(30);
    big_k["overrides"]["k"] = json!(11);
    let (s, b) = post(&app, &big_k).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8_lossy(&b).contains("overrides.k"));
}

#[tokio::test]
async fn responses_are_stable_and_consistent() {
    let app = loaded();
    let (s, first) = post(&app, &request(30)).await;
    assert_eq!(s, StatusCode::OK);
    let (_, second) = post(&app, &request(30)).await;
    assert_eq!(first, second);

    let r: RecommendResponse = serde_json::from_slice(&first).unwrap();
    assert_eq!(r.seed, 9);
    assert!(r.cold_start);
    let cal: f64 = r.bundle.iter().map(|b| b.quantity as f64 * b.cal).sum();
    let prot: f64 = r.bundle.iter().map(|b| b.quantity as f64 * b.prot).sum();
    assert_eq!(r.totals.cal, cal);
    assert_eq!(r.totals.prot, prot);
    assert_eq!(r.success, r.targets.satisfied_by(cal, prot));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_match_serial_ones() {
    let app = loaded();
    let bodies: Vec<Value> = (20..28).map(request).collect();
    let mut serial = Vec::new();
    for b in &bodies {
        serial.push(post(&app, b).await);
    }
    let handles: Vec<_> = bodies
        .iter()
        .cloned()
        .map(|b| {
            let app = app.clone();
            tokio::spawn(async move { post(&app, &b).await })
        })
        .collect();
    for (h, want) in handles.into_iter().zip(serial) {
        assert_eq!(h.await.unwrap(), want);
    }
}
