//! A full scribble session against the HTTP service, driven in-process:
//! create a session from a dataset image, add scribbles, recompute and read
//! the marginals back. The model is an untrained initialisation; swap in a
//! checkpoint for meaningful marginals.
use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use stochnet::data::synth_blob_task;
use stochnet::experiment::BlobProtocol;
use stochnet::service::{router, AppState, ServiceSettings};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    println!("{method} {uri} -> {status}");
    v
}

fn summary(v: &Value) -> String {
    let m: Vec<f64> = serde_json::from_value(v["marginals"].clone()).unwrap();
    let fg = m.iter().filter(|&&p| p > 0.5).count();
    format!("revision {} method {} samples {} foreground {fg}/{}", v["revision"], v["method"], v["samples"], m.len())
}

#[tokio::main]
async fn main() {
    let protocol = BlobProtocol::default();
    let net = protocol.network(0);
    let images = synth_blob_task(4, protocol.size, protocol.size, 3);
    let app = router(AppState::new(Some(net), Some(images), ServiceSettings::default()));

    let created = call(&app, "POST", "/sessions", json!({ "dataset_index": 0 })).await;
    let id = created["id"].as_u64().unwrap();
    println!("  {}", summary(&created));
    let scribbles = json!({ "scribbles": [
        { "x": 8, "y": 8, "label": "fg" },
        { "x": 0, "y": 0, "label": "bg" },
        { "x": 15, "y": 15, "label": "bg" },
    ]});
    let r = call(&app, "POST", &format!("/sessions/{id}/scribbles"), scribbles).await;
    println!("  {r}");
    let r = call(&app, "POST", &format!("/sessions/{id}/recompute"), Value::Null).await;
    println!("  {}", summary(&r));
    let r = call(&app, "GET", &format!("/sessions/{id}/marginals"), Value::Null).await;
    println!("  current revision {}, {}", r["current_revision"], summary(&r));
    let r = call(&app, "POST", &format!("/sessions/{id}/scribbles"), json!({ "scribbles": [{ "x": 99, "y": 0, "label": "fg" }] })).await;
    println!("  {r}");
}
