//! Recorded HTTP responses over the ten-skill fixture.

use std::collections::BTreeSet;
use std::path::PathBuf;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use skillhub_core::service::{self, AppState};
use tower::ServiceExt;

pub const CASES: &[(&str, &str)] = &[
    ("keyword_prefix", "/keyword?q=react*&top_k=10"),
    ("keyword_phrase", "/keyword?q=%22code%20review%22"),
    ("keyword_or", "/keyword?q=react%20OR%20vue&top_k=5"),
    ("keyword_not", "/keyword?q=react%20NOT%20hooks"),
    (
        "semantic_containers",
        "/semantic?q=help%20me%20build%20and%20deploy%20containerized%20applications&top_k=5",
    ),
    ("semantic_auth", "/semantic?q=implement+authentication+JWT&top_k=3"),
    ("hybrid_defaults", "/hybrid?q=docker%20deploy&top_k=5"),
    (
        "hybrid_weighted",
        "/hybrid?q=implement+authentication+JWT&top_k=10&keyword_weight=0.3&semantic_weight=0.7",
    ),
    ("detail_jwt", "/detail/sec--jwt-auth"),
    ("detail_long_guide", "/detail/docs--long-guide"),
];

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn app() -> Router {
    service::router(AppState::with_engine(super::engine(super::wire_fixture())))
}

pub fn get(app: &Router, uri: &str) -> (StatusCode, HeaderMap, Vec<u8>) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let resp = app
            .clone()
            .oneshot(Request::get(uri).body(Body::empty()).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        (status, headers, body.to_vec())
    })
}

/// Compares every case with its golden file, rewriting the files instead
/// when `UPDATE_GOLDENS` is set.
pub fn check_goldens() -> Result<(), String> {
    let app = app();
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    let mut failures = Vec::new();
    for (name, uri) in CASES {
        let (status, _, body) = get(&app, uri);
        if status != StatusCode::OK {
            failures.push(format!("{name}: status {status}"));
            continue;
        }
        let path = golden_dir().join(format!("{name}.json"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &body).unwrap();
            continue;
        }
        match std::fs::read(&path) {
            Ok(expected) if expected == body => {}
            Ok(_) => failures.push(format!("{name}: body differs from {}", path.display())),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures.join("; "))
    }
}

/// Every hit carries the five fixed keys plus exactly one of score/rrf_score.
pub fn check_hit_keys(body: &[u8], hybrid: bool) -> Result<usize, String> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let hits = value.as_array().ok_or("body is not a JSON array")?;
    let score_key = if hybrid { "rrf_score" } else { "score" };
    let expected: BTreeSet<&str> = ["name", "description", "skill_md_snippet", "skill_id", "github_stars", score_key]
        .into_iter()
        .collect();
    for hit in hits {
        let keys: BTreeSet<&str> = hit
            .as_object()
            .ok_or("hit is not an object")?
            .keys()
            .map(String::as_str)
            .collect();
        if keys != expected {
            return Err(format!("hit keys {keys:?}, expected {expected:?}"));
        }
    }
    Ok(hits.len())
}
