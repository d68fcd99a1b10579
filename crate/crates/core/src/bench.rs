//! Built-in benchmark: index build time and `/hybrid` latency on a synthetic
//! corpus, measured through the HTTP router.

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde::Serialize;
use tower::ServiceExt;

use crate::dense::{self, HashEmbedder, RetryPolicy};
use crate::engine::{EngineConfig, SearchEngine, SearchError};
use crate::lexical;
use crate::service::{self, AppState};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub corpus: SynthConfig,
    pub queries: usize,
    pub top_k: usize,
    pub dim: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            corpus: SynthConfig::default(),
            queries: 200,
            top_k: 10,
            dim: HashEmbedder::DEFAULT_DIM,
            warmup: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub skills: usize,
    pub dim: usize,
    pub lexical_build_secs: f64,
    pub dense_build_secs: f64,
    pub build_secs: f64,
    pub queries: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        format!(
            "skills: {}  dim: {}\nindex build: {:.2}s (lexical {:.2}s, dense {:.2}s)\n\
             /hybrid top-k over {} queries: mean {:.2}ms  p50 {:.2}ms  p95 {:.2}ms  max {:.2}ms\n",
            self.skills,
            self.dim,
            self.build_secs,
            self.lexical_build_secs,
            self.dense_build_secs,
            self.queries,
            self.mean_ms,
            self.p50_ms,
            self.p95_ms,
            self.max_ms
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("benchmark request failed: {0}")]
    Request(String),
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[Duration], p: f64) -> Duration {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let manifest = synth::synthetic_manifest(&cfg.corpus);
    let queries = synth::synthetic_queries(&manifest, cfg.queries + cfg.warmup, cfg.corpus.seed ^ 0x5eed);
    let provider = Arc::new(HashEmbedder::with_dim(cfg.corpus.seed, cfg.dim));
    let config = EngineConfig::default();

    let t0 = Instant::now();
    let lexical = lexical::build_lexical_index(&manifest, &config.lexical).map_err(SearchError::from)?;
    let lexical_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let dense = dense::build_dense_index(&manifest, provider.as_ref(), &config.semantic, RetryPolicy::default())
        .map_err(SearchError::from)?;
    let dense_secs = t1.elapsed().as_secs_f64();
    let build_secs = t0.elapsed().as_secs_f64();

    let skills = manifest.len();
    let engine = SearchEngine::new(manifest, lexical, dense, provider, config)?;
    let app = service::router(AppState::with_engine(engine));

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| BenchError::Request(e.to_string()))?;
    let latencies = runtime.block_on(async {
        let mut latencies = Vec::with_capacity(cfg.queries);
        for (i, q) in queries.iter().enumerate() {
            let encoded: String = url::form_urlencoded::byte_serialize(q.as_bytes()).collect();
            let uri = format!("/hybrid?q={encoded}&top_k={}", cfg.top_k);
            let start = Instant::now();
            let resp = app
                .clone()
                .oneshot(Request::get(uri).body(Body::empty()).expect("valid request"))
                .await
                .map_err(|e| BenchError::Request(e.to_string()))?;
            let status = resp.status();
            axum::body::to_bytes(resp.into_body(), usize::MAX)
                .await
                .map_err(|e| BenchError::Request(e.to_string()))?;
            let elapsed = start.elapsed();
            if status != StatusCode::OK {
                return Err(BenchError::Request(format!("query {q:?} returned {status}")));
            }
            if i >= cfg.warmup {
                latencies.push(elapsed);
            }
        }
        Ok(latencies)
    })?;

    let total: Duration = latencies.iter().sum();
    Ok(BenchReport {
        skills,
        dim: cfg.dim,
        lexical_build_secs: lexical_secs,
        dense_build_secs: dense_secs,
        build_secs,
        queries: latencies.len(),
        mean_ms: ms(total) / latencies.len() as f64,
        p50_ms: ms(percentile(&latencies, 50.0)),
        p95_ms: ms(percentile(&latencies, 95.0)),
        max_ms: ms(*latencies.iter().max().expect("at least one query")),
    })
}
