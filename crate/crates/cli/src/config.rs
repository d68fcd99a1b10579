//! Tunables: command-line flags, `SKILLHUB_*` env vars, and an optional
//! TOML/JSON config file. A flag (or its env var) beats the file, and the file
//! beats the built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use skillhub_core::engine::EngineConfig;
use skillhub_core::{FusionConfig, LexicalConfig, SemanticConfig};

#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    /// BM25 weight of the name field [default: 10]
    #[arg(long, env = "SKILLHUB_BM25_WEIGHT_NAME")]
    pub bm25_weight_name: Option<f64>,
    /// BM25 weight of the description field [default: 5]
    #[arg(long, env = "SKILLHUB_BM25_WEIGHT_DESCRIPTION")]
    pub bm25_weight_description: Option<f64>,
    /// BM25 weight of the SKILL.md content field [default: 5]
    #[arg(long, env = "SKILLHUB_BM25_WEIGHT_CONTENT")]
    pub bm25_weight_content: Option<f64>,
    /// BM25 term-frequency saturation [default: 1.2]
    #[arg(long, env = "SKILLHUB_BM25_K1")]
    pub bm25_k1: Option<f64>,
    /// BM25 length normalization [default: 0.75]
    #[arg(long, env = "SKILLHUB_BM25_B")]
    pub bm25_b: Option<f64>,
    /// Index the SKILL.md body as a keyword field [default: true]
    #[arg(long, env = "SKILLHUB_CONTENT_FIELD")]
    pub content_field: Option<bool>,
    /// Share of content similarity in the semantic score [default: 0.05]
    #[arg(long, env = "SKILLHUB_CONTENT_WEIGHT")]
    pub content_weight: Option<f64>,
    /// Instruction prepended to queries before embedding
    /// [default: "Find skills matching this query:"]
    #[arg(long, env = "SKILLHUB_QUERY_INSTRUCTION")]
    pub query_instruction: Option<String>,
    /// Reciprocal rank fusion constant [default: 60]
    #[arg(long, env = "SKILLHUB_RRF_K")]
    pub rrf_k: Option<f64>,
    /// Default hybrid keyword weight [default: 0.5]
    #[arg(long, env = "SKILLHUB_KEYWORD_WEIGHT")]
    pub keyword_weight: Option<f64>,
    /// Default hybrid semantic weight [default: 0.5]
    #[arg(long, env = "SKILLHUB_SEMANTIC_WEIGHT")]
    pub semantic_weight: Option<f64>,
    /// Hits taken from each leg before fusion [default: 100]
    #[arg(long, env = "SKILLHUB_CANDIDATE_DEPTH")]
    pub candidate_depth: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PathArgs {
    /// Corpus manifest (JSON lines)
    #[arg(long, env = "SKILLHUB_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Lexical index file
    #[arg(long, env = "SKILLHUB_LEXICAL_INDEX")]
    pub lexical_index: Option<PathBuf>,
    /// Vector store file
    #[arg(long, env = "SKILLHUB_VECTOR_STORE")]
    pub vector_store: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProviderArgs {
    /// Embedding provider base URL; without it the offline hash embedder is used
    #[arg(long, env = "SKILLHUB_PROVIDER_URL")]
    pub provider_url: Option<String>,
    /// Seed of the offline hash embedder [default: 0]
    #[arg(long, env = "SKILLHUB_HASH_SEED")]
    pub hash_seed: Option<u64>,
    /// Dimension of the offline hash embedder [default: 64]
    #[arg(long, env = "SKILLHUB_HASH_DIM")]
    pub hash_dim: Option<usize>,
    /// Provider request timeout in seconds [default: 30]
    #[arg(long, env = "SKILLHUB_PROVIDER_TIMEOUT")]
    pub provider_timeout: Option<u64>,
    /// Provider input limit in characters [default: 8192]
    #[arg(long, env = "SKILLHUB_PROVIDER_MAX_CHARS")]
    pub provider_max_chars: Option<usize>,
}

/// Mirrors every flag; keys are the flag names in snake_case.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub lexical_index: Option<PathBuf>,
    pub vector_store: Option<PathBuf>,
    pub provider_url: Option<String>,
    pub hash_seed: Option<u64>,
    pub hash_dim: Option<usize>,
    pub provider_timeout: Option<u64>,
    pub provider_max_chars: Option<usize>,
    pub bm25_weight_name: Option<f64>,
    pub bm25_weight_description: Option<f64>,
    pub bm25_weight_content: Option<f64>,
    pub bm25_k1: Option<f64>,
    pub bm25_b: Option<f64>,
    pub content_field: Option<bool>,
    pub content_weight: Option<f64>,
    pub query_instruction: Option<String>,
    pub rrf_k: Option<f64>,
    pub keyword_weight: Option<f64>,
    pub semantic_weight: Option<f64>,
    pub candidate_depth: Option<usize>,
    pub port: Option<u16>,
    pub bind: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => bail!("config file must end in .toml or .json: {}", path.display()),
        };
        Ok(parsed)
    }
}

pub fn resolve_engine_config(t: &TuningArgs, file: &FileConfig) -> EngineConfig {
    let lex = LexicalConfig::default();
    let sem = SemanticConfig::default();
    let fus = FusionConfig::default();
    EngineConfig {
        lexical: LexicalConfig {
            weight_name: t.bm25_weight_name.or(file.bm25_weight_name).unwrap_or(lex.weight_name),
            weight_description: t
                .bm25_weight_description
                .or(file.bm25_weight_description)
                .unwrap_or(lex.weight_description),
            weight_content: t.bm25_weight_content.or(file.bm25_weight_content).unwrap_or(lex.weight_content),
            k1: t.bm25_k1.or(file.bm25_k1).unwrap_or(lex.k1),
            b: t.bm25_b.or(file.bm25_b).unwrap_or(lex.b),
            include_content_field: t.content_field.or(file.content_field).unwrap_or(lex.include_content_field),
        },
        semantic: SemanticConfig {
            content_weight: t.content_weight.or(file.content_weight).unwrap_or(sem.content_weight),
            instruction_prefix: t
                .query_instruction
                .clone()
                .or_else(|| file.query_instruction.clone())
                .unwrap_or(sem.instruction_prefix),
            normalize: sem.normalize,
        },
        fusion: FusionConfig {
            rrf_k: t.rrf_k.or(file.rrf_k).unwrap_or(fus.rrf_k),
            keyword_weight: t.keyword_weight.or(file.keyword_weight).unwrap_or(fus.keyword_weight),
            semantic_weight: t.semantic_weight.or(file.semantic_weight).unwrap_or(fus.semantic_weight),
            candidate_depth: t.candidate_depth.or(file.candidate_depth).unwrap_or(fus.candidate_depth),
        },
    }
}

pub fn resolve_paths(p: &PathArgs, file: &FileConfig) -> PathArgs {
    PathArgs {
        corpus: p.corpus.clone().or_else(|| file.corpus.clone()),
        lexical_index: p.lexical_index.clone().or_else(|| file.lexical_index.clone()),
        vector_store: p.vector_store.clone().or_else(|| file.vector_store.clone()),
    }
}

pub fn resolve_provider(p: &ProviderArgs, file: &FileConfig) -> ProviderArgs {
    ProviderArgs {
        provider_url: p.provider_url.clone().or_else(|| file.provider_url.clone()),
        hash_seed: p.hash_seed.or(file.hash_seed),
        hash_dim: p.hash_dim.or(file.hash_dim),
        provider_timeout: p.provider_timeout.or(file.provider_timeout),
        provider_max_chars: p.provider_max_chars.or(file.provider_max_chars),
    }
}
