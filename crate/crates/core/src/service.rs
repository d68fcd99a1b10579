//! HTTP endpoints consumed by agents, and the finding-skills tool document.
//!
//! | route                | body                                  |
//! |----------------------|---------------------------------------|
//! | `GET /keyword`       | hits with `score` (negated BM25)      |
//! | `GET /semantic`      | hits with `score` (cosine blend)      |
//! | `GET /hybrid`        | hits with `rrf_score`                 |
//! | `GET /detail/{id}`   | full record                           |
//!
//! Errors are `{"error": "..."}` with a 4xx/5xx status.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::corpus::HelperFile;
use crate::dense::DenseError;
use crate::engine::{SearchEngine, SearchError};
use crate::fusion::{FusionConfig, RankedList};

pub const DEFAULT_PORT: u16 = 8742;
pub const DEFAULT_TOP_K: usize = 10;
pub const MAX_TOP_K: usize = 100;
pub const WARNING_HEADER: &str = "x-skillhub-warning";

const FINDING_SKILLS_TEMPLATE: &str = include_str!("finding_skills.md");
const TEMPLATE_BASE: &str = "http://localhost:8742";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHitDto {
    pub name: String,
    pub description: String,
    pub skill_md_snippet: String,
    pub skill_id: String,
    pub github_stars: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rrf_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailDto {
    pub skill_id: String,
    pub name: String,
    pub description: String,
    pub license: String,
    pub github_stars: u64,
    pub content: String,
    pub helper_files: Vec<HelperFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMode {
    Keyword,
    Semantic,
    Hybrid,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Keyword => "keyword",
            SearchMode::Semantic => "semantic",
            SearchMode::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keyword" => Ok(SearchMode::Keyword),
            "semantic" => Ok(SearchMode::Semantic),
            "hybrid" => Ok(SearchMode::Hybrid),
            other => Err(format!("unknown search mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRequest {
    pub q: String,
    pub top_k: usize,
    pub keyword_weight: f64,
    pub semantic_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            message: message.into(),
        }
    }

    fn unavailable(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.status, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let status = match &e {
            SearchError::Query(_) | SearchError::Fusion(_) => StatusCode::BAD_REQUEST,
            SearchError::Dense(DenseError::ProviderUnavailable { .. } | DenseError::Provider(_)) => {
                StatusCode::BAD_GATEWAY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&ErrorBody { error: &self.message }).expect("error body serializes");
        json_response(self.status, body)
    }
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    let mut resp = (status, body).into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    resp
}

/// Parses the URL query string of a search endpoint. Hybrid weights left out
/// of the query fall back to `defaults`.
pub fn parse_search_params(
    mode: SearchMode,
    raw: Option<&str>,
    defaults: &FusionConfig,
) -> Result<SearchRequest, ApiError> {
    let pairs: Vec<(String, String)> = url::form_urlencoded::parse(raw.unwrap_or("").as_bytes())
        .into_owned()
        .collect();
    let param = |name: &str| pairs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str());

    let q = param("q").ok_or_else(|| ApiError::bad_request("missing required parameter q"))?;
    if q.trim().is_empty() {
        return Err(ApiError::bad_request("parameter q is empty"));
    }
    let top_k = match param("top_k") {
        None => DEFAULT_TOP_K,
        Some(v) => {
            let n: i64 = v
                .trim()
                .parse()
                .map_err(|_| ApiError::bad_request(format!("top_k must be an integer, got {v:?}")))?;
            n.clamp(1, MAX_TOP_K as i64) as usize
        }
    };
    let weight = |name: &str, default: f64| -> Result<f64, ApiError> {
        if mode != SearchMode::Hybrid {
            return Ok(default);
        }
        match param(name) {
            None => Ok(default),
            Some(v) => {
                let w: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| ApiError::bad_request(format!("{name} must be a number, got {v:?}")))?;
                if !w.is_finite() || w < 0.0 {
                    return Err(ApiError::bad_request(format!("{name} must be a non-negative number")));
                }
                Ok(w)
            }
        }
    };
    let keyword_weight = weight("keyword_weight", defaults.keyword_weight)?;
    let semantic_weight = weight("semantic_weight", defaults.semantic_weight)?;
    if keyword_weight == 0.0 && semantic_weight == 0.0 {
        return Err(ApiError::bad_request("keyword_weight and semantic_weight cannot both be zero"));
    }
    Ok(SearchRequest {
        q: q.to_string(),
        top_k,
        keyword_weight,
        semantic_weight,
    })
}

/// Response hits plus an optional degradation warning.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResponse {
    pub hits: Vec<SearchHitDto>,
    pub warning: Option<String>,
}

impl SearchResponse {
    /// The exact response body: a compact JSON array.
    pub fn body(&self) -> Vec<u8> {
        serde_json::to_vec(&self.hits).expect("hits serialize")
    }
}

pub fn run_search(engine: &SearchEngine, mode: SearchMode, req: &SearchRequest) -> Result<SearchResponse, ApiError> {
    let (list, warning) = match mode {
        SearchMode::Keyword => (engine.keyword(&req.q, req.top_k)?, None),
        SearchMode::Semantic => (engine.semantic(&req.q, req.top_k)?, None),
        SearchMode::Hybrid => {
            let fusion = FusionConfig {
                keyword_weight: req.keyword_weight,
                semantic_weight: req.semantic_weight,
                ..engine.config().fusion.clone()
            };
            let outcome = engine.hybrid(&req.q, req.top_k, &fusion)?;
            (outcome.list, outcome.warning)
        }
    };
    Ok(SearchResponse {
        hits: to_hits(engine, mode, &list),
        warning,
    })
}

fn to_hits(engine: &SearchEngine, mode: SearchMode, list: &RankedList) -> Vec<SearchHitDto> {
    list.hits
        .iter()
        .filter_map(|hit| {
            let record = engine.record(&hit.skill_id)?;
            let (score, rrf_score) = match mode {
                SearchMode::Hybrid => (None, Some(hit.score)),
                _ => (Some(hit.score), None),
            };
            Some(SearchHitDto {
                name: record.name.clone(),
                description: record.description.clone(),
                skill_md_snippet: engine.snippet(&hit.skill_id).unwrap_or_default().to_string(),
                skill_id: record.skill_id.clone(),
                github_stars: record.github_stars,
                score,
                rrf_score,
            })
        })
        .collect()
}

pub fn detail(engine: &SearchEngine, skill_id: &str) -> Option<DetailDto> {
    engine.record(skill_id).map(|r| DetailDto {
        skill_id: r.skill_id.clone(),
        name: r.name.clone(),
        description: r.description.clone(),
        license: r.license.to_string(),
        github_stars: r.github_stars,
        content: r.content.clone(),
        helper_files: r.helper_files.clone(),
    })
}

/// Shared handle to the current index snapshot. Installing a new engine
/// swaps the snapshot; requests already running keep the old one.
#[derive(Clone, Default)]
pub struct AppState {
    current: Arc<RwLock<Option<Arc<SearchEngine>>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_engine(engine: SearchEngine) -> Self {
        let state = Self::new();
        state.install(Arc::new(engine));
        state
    }

    pub fn install(&self, engine: Arc<SearchEngine>) {
        *self.current.write().expect("snapshot lock poisoned") = Some(engine);
    }

    pub fn snapshot(&self) -> Option<Arc<SearchEngine>> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    fn require(&self) -> Result<Arc<SearchEngine>, ApiError> {
        self.snapshot()
            .ok_or_else(|| ApiError::unavailable("index is not loaded yet"))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/keyword", get(keyword_handler))
        .route("/semantic", get(semantic_handler))
        .route("/hybrid", get(hybrid_handler))
        .route("/detail/{skill_id}", get(detail_handler))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

async fn keyword_handler(State(state): State<AppState>, RawQuery(raw): RawQuery) -> Response {
    search_handler(state, SearchMode::Keyword, raw).await
}

async fn semantic_handler(State(state): State<AppState>, RawQuery(raw): RawQuery) -> Response {
    search_handler(state, SearchMode::Semantic, raw).await
}

async fn hybrid_handler(State(state): State<AppState>, RawQuery(raw): RawQuery) -> Response {
    search_handler(state, SearchMode::Hybrid, raw).await
}

async fn search_handler(state: AppState, mode: SearchMode, raw: Option<String>) -> Response {
    let result = async {
        let engine = state.require()?;
        let req = parse_search_params(mode, raw.as_deref(), &engine.config().fusion)?;
        // Query embedding may block on a remote provider.
        tokio::task::spawn_blocking(move || run_search(&engine, mode, &req))
            .await
            .map_err(|e| ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: format!("search task failed: {e}"),
            })?
    }
    .await;
    match result {
        Ok(resp) => {
            let mut out = json_response(StatusCode::OK, resp.body());
            if let Some(w) = resp.warning.as_deref().and_then(|w| HeaderValue::from_str(w).ok()) {
                out.headers_mut().insert(WARNING_HEADER, w);
            }
            out
        }
        Err(e) => e.into_response(),
    }
}

async fn detail_handler(State(state): State<AppState>, Path(skill_id): Path<String>) -> Response {
    let engine = match state.require() {
        Ok(engine) => engine,
        Err(e) => return e.into_response(),
    };
    match detail(&engine, &skill_id) {
        Some(dto) => json_response(StatusCode::OK, serde_json::to_vec(&dto).expect("detail serializes")),
        None => ApiError::not_found(format!("unknown skill_id {skill_id:?}")).into_response(),
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_listener<F>(listener: tokio::net::TcpListener, state: AppState, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid base URL {url:?}: {reason}")]
pub struct BaseUrlError {
    pub url: String,
    pub reason: String,
}

/// Renders the finding-skills SKILL.md with every endpoint pointing at
/// `base_url` (e.g. `http://localhost:8742`).
pub fn emit_finding_skills_doc(base_url: &str) -> Result<String, BaseUrlError> {
    let err = |reason: &str| BaseUrlError {
        url: base_url.to_string(),
        reason: reason.to_string(),
    };
    let parsed = url::Url::parse(base_url).map_err(|e| err(&e.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(err("scheme must be http or https"));
    }
    if parsed.host_str().map_or(true, str::is_empty) {
        return Err(err("missing host"));
    }
    if parsed.query().is_some() || parsed.fragment().is_some() {
        return Err(err("base URL cannot carry a query or fragment"));
    }
    let base = base_url.trim().trim_end_matches('/');
    Ok(FINDING_SKILLS_TEMPLATE.replace(TEMPLATE_BASE, base))
}
