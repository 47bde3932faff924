use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::Value;
use tower::ServiceExt;

use termite::{termite_join, EmbeddingStore, HubnessMetadata};
use termite_cli::server::{router, AppState, Stats};

fn fixture() -> (EmbeddingStore, HubnessMetadata) {
    let rows = (0..30).map(|i| {
        let angle = i as f32 * 0.1;
        let name = if i % 3 == 0 { format!("Alpha {i:02}") } else { format!("beta {i:02}") };
        (name, vec![angle.cos(), angle.sin(), 0.2])
    });
    let store = EmbeddingStore::from_rows(3, rows).unwrap();
    let meta = HubnessMetadata::compute(&store, 4).unwrap();
    (store, meta)
}

fn app() -> Router {
    let (store, meta) = fixture();
    router(Arc::new(AppState::new(store, meta, 512)), None)
}

async fn get(app: Router, uri: &str) -> (StatusCode, Value) {
    let res = app
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn query_serializes_the_join_exactly() {
    let (store, meta) = fixture();
    for confidence in [false, true] {
        let uri = format!("/api/query?entity=beta%2004&k=3&confidence={confidence}");
        let (status, body) = get(app(), &uri).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["query"], "beta 04");

        let want = termite_join(&store, &meta, "beta 04", 3, confidence).unwrap();
        let results = body["results"].as_array().unwrap();
        assert_eq!(results.len(), 3);
        for (got, hit) in results.iter().zip(&want.results) {
            assert_eq!(got["entity"], hit.entity.as_str());
            assert_eq!(got["distance"].as_f64().unwrap().to_bits(), hit.distance.to_bits());
            assert_eq!(got["hubness"], hit.hubness);
            assert_eq!(got["confidence"].as_f64(), hit.confidence);
        }
        assert_eq!(body["removed_hubs"].as_array().unwrap().len(), want.removed_hubs.len());
    }
}

#[tokio::test]
async fn query_errors() {
    let (status, body) = get(app(), "/api/query?entity=nobody&k=3").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body, serde_json::json!({ "error": "entity-not-found" }));

    for bad in ["k=-1", "k=three", "confidence=maybe&k=2"] {
        let (status, body) = get(app(), &format!("/api/query?entity=beta%2004&{bad}")).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert!(body["error"].is_string());
    }
    let (status, _) = get(app(), "/api/query?k=3").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = get(app(), "/api/query?entity=beta%2004&k=0").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["results"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn entities_prefix_search() {
    let (_, body) = get(app(), "/api/entities?prefix=ALPHA&limit=3").await;
    assert_eq!(body, serde_json::json!(["Alpha 00", "Alpha 03", "Alpha 06"]));

    let (_, body) = get(app(), "/api/entities?prefix=zzz").await;
    assert_eq!(body, serde_json::json!([]));

    let (_, body) = get(app(), "/api/entities?prefix=&limit=0").await;
    assert_eq!(body, serde_json::json!([]));

    // Default limit, sorted by the entity string itself.
    let (_, body) = get(app(), "/api/entities").await;
    let names: Vec<&str> = body.as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names.len(), 10);
    assert!(names.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(names[0], "Alpha 00");

    let (status, _) = get(app(), "/api/entities?limit=-2").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn stats_match_loaded_files() {
    let (store, meta) = fixture();
    let (status, first) = get(app(), "/api/stats").await;
    assert_eq!(status, StatusCode::OK);
    let stats: Stats = serde_json::from_value(first.clone()).unwrap();
    assert_eq!(
        stats,
        Stats {
            entities: store.len(),
            dim: 3,
            input_dim: 512,
            hubness_cutoff: meta.cutoff,
            k_h: 4,
        }
    );
    let (_, second) = get(app(), "/api/stats").await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn static_files_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>termite</html>").unwrap();
    let (store, meta) = fixture();
    let app = router(Arc::new(AppState::new(store, meta, 512)), Some(dir.path()));
    let res = app
        .oneshot(Request::get("/").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    assert_eq!(&bytes[..], b"<html>termite</html>");
}
