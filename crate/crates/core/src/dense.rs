//! Dense retrieval: embedding providers and the metadata/content vector index.
//!
//! Every skill gets two vectors: one for `name: description` and one for the
//! SKILL.md body. A query scores `(1 - w)·cos(q, meta) + w·cos(q, content)`.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::corpus::CorpusManifest;
use crate::fusion::{Hit, RankedList, ScoreKind};
use crate::text;

pub const DEFAULT_INSTRUCTION: &str = "Find skills matching this query:";
const STORE_MAGIC: &[u8; 4] = b"SKVS";
const STORE_VERSION: u32 = 1;
const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    /// Network failure, timeout or 5xx: worth retrying.
    #[error("embedding provider unavailable: {0}")]
    Unavailable(String),
    #[error("embedding provider protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, thiserror::Error)]
pub enum DenseError {
    #[error("no texts to embed")]
    NoInput,
    #[error("embedding provider failed after {attempts} attempts: {last}")]
    ProviderUnavailable { attempts: u32, last: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("embedding dimension {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider {got} does not match index fingerprint {expected}")]
    FingerprintMismatch { expected: String, got: String },
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider returned a non-finite embedding")]
    NonFinite,
    #[error("invalid semantic config: {0}")]
    InvalidConfig(String),
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed vector store: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub model: String,
    pub dim: usize,
}

impl std::fmt::Display for ProviderInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}d", self.model, self.dim)
    }
}

/// Anything that can turn texts into fixed-dimension vectors.
///
/// Implementations never add instruction prefixes; [`embed`] owns that.
pub trait EmbeddingProvider: Send + Sync {
    fn info(&self) -> ProviderInfo;

    /// Longest input, in characters, the provider accepts.
    fn max_input_chars(&self) -> usize {
        8192
    }

    fn embed_batch(&self, texts: &[String], is_query: bool) -> Result<Vec<Vec<f32>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        let norm = l2(&values);
        EmbeddingVector { values, norm }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn l2(values: &[f32]) -> f64 {
    values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

fn normalized(values: &[f32]) -> Vec<f32> {
    let norm = l2(values);
    if norm == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|&v| (f64::from(v) / norm) as f32).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticConfig {
    /// Share of the content similarity in the blended score.
    pub content_weight: f64,
    pub instruction_prefix: String,
    pub normalize: bool,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        SemanticConfig {
            content_weight: 0.05,
            instruction_prefix: DEFAULT_INSTRUCTION.to_string(),
            normalize: true,
        }
    }
}

impl SemanticConfig {
    pub fn validate(&self) -> Result<(), DenseError> {
        if !(0.0..=1.0).contains(&self.content_weight) {
            return Err(DenseError::InvalidConfig("content_weight must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// The exact string submitted to the provider for a query.
    pub fn query_text(&self, query: &str) -> String {
        if self.instruction_prefix.is_empty() {
            query.to_string()
        } else {
            format!("{} {}", self.instruction_prefix, query)
        }
    }
}

/// `(1 - w)·cos_meta + w·cos_content`.
pub fn blend(cos_meta: f64, cos_content: f64, content_weight: f64) -> f64 {
    (1.0 - content_weight) * cos_meta + content_weight * cos_content
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

fn truncate_chars(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

/// Embeds texts through `provider`, prefixing queries with the instruction
/// and truncating to the provider's input limit.
pub fn embed(
    texts: &[String],
    is_query: bool,
    provider: &dyn EmbeddingProvider,
    config: &SemanticConfig,
    retry: RetryPolicy,
) -> Result<Vec<EmbeddingVector>, DenseError> {
    if texts.is_empty() {
        return Err(DenseError::NoInput);
    }
    let limit = provider.max_input_chars();
    let prepared: Vec<String> = texts
        .iter()
        .map(|t| {
            let t = if is_query { config.query_text(t) } else { t.clone() };
            truncate_chars(&t, limit).to_string()
        })
        .collect();

    let raw = with_retries(retry, || provider.embed_batch(&prepared, is_query))?;
    if raw.len() != texts.len() {
        return Err(DenseError::CountMismatch {
            expected: texts.len(),
            got: raw.len(),
        });
    }
    let expected = provider.info().dim;
    raw.into_iter()
        .map(|v| {
            if v.len() != expected {
                return Err(DenseError::DimensionMismatch { expected, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(DenseError::NonFinite);
            }
            let v = if config.normalize { normalized(&v) } else { v };
            Ok(EmbeddingVector::new(v))
        })
        .collect()
}

fn with_retries<T>(
    policy: RetryPolicy,
    mut call: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, DenseError> {
    let attempts = policy.attempts.max(1);
    let mut backoff = policy.initial_backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match call() {
            Ok(v) => return Ok(v),
            Err(ProviderError::Unavailable(msg)) if attempt < attempts => {
                warn!(attempt, "embedding provider unavailable, retrying: {msg}");
                thread::sleep(backoff);
                backoff *= 2;
            }
            Err(ProviderError::Unavailable(last)) => {
                return Err(DenseError::ProviderUnavailable { attempts, last });
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Offline provider mapping text to a unit vector built from seeded hashes.
///
/// The vector is the sum of one pseudo-random direction per token plus a
/// smaller direction for the whole string, so texts sharing words are closer
/// than unrelated texts, and distinct strings still get distinct vectors.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

const WHOLE_TEXT_WEIGHT: f64 = 0.25;

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, Self::DEFAULT_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        HashEmbedder { seed, dim }
    }

    fn direction(&self, salt: u8, text: &str, out: &mut [f64], scale: f64) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update([salt]);
        hasher.update(text.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        for v in out.iter_mut() {
            let unit = f64::from(rng.next_u32()) / 4_294_967_296.0;
            *v += scale * (2.0 * unit - 1.0);
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for token in text::tokenize(text) {
            self.direction(0, &token, &mut acc, 1.0);
        }
        self.direction(1, text, &mut acc, WHOLE_TEXT_WEIGHT);
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        acc.iter().map(|v| (v / norm) as f32).collect()
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn info(&self) -> ProviderInfo {
        ProviderInfo {
            model: format!("hash-embedder-v1-seed{}", self.seed),
            dim: self.dim,
        }
    }

    fn max_input_chars(&self) -> usize {
        32_768
    }

    fn embed_batch(&self, texts: &[String], _is_query: bool) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.par_iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
    is_query: bool,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
    dim: usize,
    model: String,
}

#[derive(Deserialize)]
struct HealthResponse {
    model: String,
    dim: usize,
}

/// Client for the `/embed` wire protocol.
pub struct HttpProvider {
    base: String,
    agent: ureq::Agent,
    info: ProviderInfo,
    max_input_chars: usize,
}

fn classify(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::StatusCode(code) if code >= 500 => {
            ProviderError::Unavailable(format!("HTTP status {code}"))
        }
        ureq::Error::StatusCode(code) => ProviderError::Protocol(format!("HTTP status {code}")),
        ureq::Error::Json(e) => ProviderError::Protocol(e.to_string()),
        other => ProviderError::Unavailable(other.to_string()),
    }
}

impl HttpProvider {
    /// Connects to a provider at `base_url`, learning its model and dimension
    /// from `GET /health`, or from a probe embedding if that is not served.
    pub fn connect(base_url: &str, timeout: Duration, retry: RetryPolicy) -> Result<Self, DenseError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let base = base_url.trim_end_matches('/').to_string();
        let mut provider = HttpProvider {
            base,
            agent,
            info: ProviderInfo {
                model: String::new(),
                dim: 0,
            },
            max_input_chars: 8192,
        };
        provider.info = with_retries(retry, || provider.probe())?;
        Ok(provider)
    }

    pub fn with_max_input_chars(mut self, limit: usize) -> Self {
        self.max_input_chars = limit;
        self
    }

    fn probe(&self) -> Result<ProviderInfo, ProviderError> {
        match self.agent.get(format!("{}/health", self.base)).call() {
            Ok(mut resp) => {
                let h: HealthResponse = resp.body_mut().read_json().map_err(classify)?;
                Ok(ProviderInfo { model: h.model, dim: h.dim })
            }
            Err(ureq::Error::StatusCode(404)) => {
                let resp = self.post(&["probe".to_string()], false)?;
                Ok(ProviderInfo {
                    model: resp.model,
                    dim: resp.dim,
                })
            }
            Err(e) => Err(classify(e)),
        }
    }

    fn post(&self, texts: &[String], is_query: bool) -> Result<EmbedResponse, ProviderError> {
        let mut resp = self
            .agent
            .post(format!("{}/embed", self.base))
            .send_json(EmbedRequest { texts, is_query })
            .map_err(classify)?;
        resp.body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_json()
            .map_err(classify)
    }
}

impl EmbeddingProvider for HttpProvider {
    fn info(&self) -> ProviderInfo {
        self.info.clone()
    }

    fn max_input_chars(&self) -> usize {
        self.max_input_chars
    }

    fn embed_batch(&self, texts: &[String], is_query: bool) -> Result<Vec<Vec<f32>>, ProviderError> {
        let resp = self.post(texts, is_query)?;
        if resp.dim != self.info.dim || resp.model != self.info.model {
            return Err(ProviderError::Protocol(format!(
                "provider changed from {} to {}/{}d",
                self.info, resp.model, resp.dim
            )));
        }
        Ok(resp.vectors)
    }
}

/// Ordinal-aligned metadata and content vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub fingerprint: ProviderInfo,
    pub normalized: bool,
    pub skill_ids: Vec<String>,
    meta: Vec<f32>,
    content: Vec<f32>,
    meta_norms: Vec<f64>,
    content_norms: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    dimension: usize,
    count: usize,
    model: String,
    normalize: bool,
    skill_ids: Vec<String>,
}

pub const EMBED_BATCH: usize = 32;

pub fn build_dense_index(
    manifest: &CorpusManifest,
    provider: &dyn EmbeddingProvider,
    config: &SemanticConfig,
    retry: RetryPolicy,
) -> Result<DenseIndex, DenseError> {
    config.validate()?;
    if manifest.is_empty() {
        return Err(DenseError::EmptyCorpus);
    }
    let meta_texts: Vec<String> = manifest.records.iter().map(|r| r.metadata_text()).collect();
    let content_texts: Vec<String> = manifest.records.iter().map(|r| r.content.clone()).collect();
    let embed_all = |texts: &[String]| -> Result<Vec<EmbeddingVector>, DenseError> {
        let batches: Vec<Vec<EmbeddingVector>> = texts
            .par_chunks(EMBED_BATCH)
            .map(|chunk| embed(chunk, false, provider, config, retry))
            .collect::<Result<_, _>>()?;
        Ok(batches.into_iter().flatten().collect())
    };
    let meta = embed_all(&meta_texts)?;
    let content = embed_all(&content_texts)?;
    let ids = manifest.records.iter().map(|r| r.skill_id.clone()).collect();
    DenseIndex::from_vectors(provider.info(), config.normalize, ids, &meta, &content)
}

impl DenseIndex {
    pub fn from_vectors(
        fingerprint: ProviderInfo,
        normalized: bool,
        skill_ids: Vec<String>,
        meta: &[EmbeddingVector],
        content: &[EmbeddingVector],
    ) -> Result<Self, DenseError> {
        let dim = fingerprint.dim;
        if meta.len() != skill_ids.len() || content.len() != skill_ids.len() {
            return Err(DenseError::CountMismatch {
                expected: skill_ids.len(),
                got: meta.len().min(content.len()),
            });
        }
        let flatten = |rows: &[EmbeddingVector]| -> Result<Vec<f32>, DenseError> {
            let mut out = Vec::with_capacity(rows.len() * dim);
            for row in rows {
                if row.dim() != dim {
                    return Err(DenseError::DimensionMismatch { expected: dim, got: row.dim() });
                }
                out.extend_from_slice(&row.values);
            }
            Ok(out)
        };
        Self::from_flat(fingerprint, normalized, skill_ids, flatten(meta)?, flatten(content)?)
    }

    fn from_flat(
        fingerprint: ProviderInfo,
        normalized: bool,
        skill_ids: Vec<String>,
        meta: Vec<f32>,
        content: Vec<f32>,
    ) -> Result<Self, DenseError> {
        let dim = fingerprint.dim;
        if dim == 0 {
            return Err(DenseError::Format("zero dimension".into()));
        }
        let norms = |m: &[f32]| m.chunks_exact(dim).map(l2).collect::<Vec<f64>>();
        let index = DenseIndex {
            meta_norms: norms(&meta),
            content_norms: norms(&content),
            fingerprint,
            normalized,
            skill_ids,
            meta,
            content,
        };
        index.check_invariants().map_err(DenseError::Format)?;
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.fingerprint.dim
    }

    pub fn len(&self) -> usize {
        self.skill_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skill_ids.is_empty()
    }

    pub fn meta_row(&self, ordinal: usize) -> &[f32] {
        let d = self.dim();
        &self.meta[ordinal * d..(ordinal + 1) * d]
    }

    pub fn content_row(&self, ordinal: usize) -> &[f32] {
        let d = self.dim();
        &self.content[ordinal * d..(ordinal + 1) * d]
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let expected = self.skill_ids.len() * self.dim();
        if self.meta.len() != expected || self.content.len() != expected {
            return Err("matrix shape disagrees with row count and dimension".into());
        }
        if self.meta.iter().chain(&self.content).any(|v| !v.is_finite()) {
            return Err("non-finite vector entry".into());
        }
        if self.normalized {
            let off = self
                .meta_norms
                .iter()
                .chain(&self.content_norms)
                .any(|n| (n - 1.0).abs() > NORM_TOLERANCE);
            if off {
                return Err("rows are not unit-norm".into());
            }
        }
        Ok(())
    }

    /// Confirms that `provider` produces vectors comparable with this index.
    pub fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<(), DenseError> {
        let info = provider.info();
        if info.dim != self.dim() {
            return Err(DenseError::DimensionMismatch {
                expected: self.dim(),
                got: info.dim,
            });
        }
        if info != self.fingerprint {
            return Err(DenseError::FingerprintMismatch {
                expected: self.fingerprint.to_string(),
                got: info.to_string(),
            });
        }
        Ok(())
    }

    /// Blended similarity for every document, in ordinal order.
    pub fn blended_scores(&self, query: &EmbeddingVector, content_weight: f64) -> Result<Vec<f64>, DenseError> {
        if query.dim() != self.dim() {
            return Err(DenseError::DimensionMismatch {
                expected: self.dim(),
                got: query.dim(),
            });
        }
        let q = &query.values;
        let cos = |row: &[f32], norm: f64| -> f64 {
            let denom = query.norm * norm;
            if denom == 0.0 {
                return 0.0;
            }
            let dot: f64 = q.iter().zip(row).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            dot / denom
        };
        let w = content_weight;
        Ok((0..self.len())
            .map(|i| {
                let cm = cos(self.meta_row(i), self.meta_norms[i]);
                let cc = if w == 0.0 { 0.0 } else { cos(self.content_row(i), self.content_norms[i]) };
                blend(cm, cc, w)
            })
            .collect())
    }

    pub fn search_semantic(
        &self,
        query: &EmbeddingVector,
        top_k: usize,
        config: &SemanticConfig,
    ) -> Result<RankedList, DenseError> {
        config.validate()?;
        let scores = self.blended_scores(query, config.content_weight)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        let cmp = |a: &usize, b: &usize| {
            scores[*b]
                .total_cmp(&scores[*a])
                .then_with(|| self.skill_ids[*a].cmp(&self.skill_ids[*b]))
        };
        let k = top_k.min(order.len());
        if k == 0 {
            return Ok(RankedList::empty(ScoreKind::Semantic));
        }
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_by(cmp);
        Ok(RankedList {
            hits: order
                .into_iter()
                .map(|i| Hit {
                    skill_id: self.skill_ids[i].clone(),
                    score: scores[i],
                })
                .collect(),
            kind: ScoreKind::Semantic,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), DenseError> {
        let header = StoreHeader {
            dimension: self.dim(),
            count: self.len(),
            model: self.fingerprint.model.clone(),
            normalize: self.normalized,
            skill_ids: self.skill_ids.clone(),
        };
        let header = serde_json::to_vec(&header).map_err(io::Error::from)?;
        out.write_all(STORE_MAGIC)?;
        out.write_all(&STORE_VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for v in self.meta.iter().chain(&self.content) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, DenseError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(DenseError::Format("bad magic".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != STORE_VERSION {
            return Err(DenseError::Format(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let header: StoreHeader =
            serde_json::from_slice(&header).map_err(|e| DenseError::Format(e.to_string()))?;
        if header.skill_ids.len() != header.count {
            return Err(DenseError::Format("id list length disagrees with count".into()));
        }
        let n = header.count * header.dimension;
        let mut read_matrix = || -> Result<Vec<f32>, DenseError> {
            let mut bytes = vec![0u8; n * 4];
            input.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let meta = read_matrix()?;
        let content = read_matrix()?;
        Self::from_flat(
            ProviderInfo {
                model: header.model,
                dim: header.dimension,
            },
            header.normalize,
            header.skill_ids,
            meta,
            content,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), DenseError> {
        self.write_to(BufWriter::new(fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, DenseError> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}
