//! A searchable snapshot: corpus records plus both indexes and the provider
//! used to embed queries.

use std::collections::HashMap;
use std::sync::Arc;

use crate::corpus::{make_snippet, CorpusManifest, SkillRecord};
use crate::dense::{self, DenseError, DenseIndex, EmbeddingProvider, EmbeddingVector, RetryPolicy, SemanticConfig};
use crate::fusion::{rrf_fuse, FusionConfig, FusionError, Method, RankedList};
use crate::lexical::{self, InvertedIndex, LexicalConfig, LexicalError};
use crate::query::{parse_query, QueryError};

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error("indexes disagree with the corpus: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineConfig {
    pub lexical: LexicalConfig,
    pub semantic: SemanticConfig,
    pub fusion: FusionConfig,
}

/// Result of a hybrid search. `warning` is set when the keyword leg was
/// dropped because the query did not parse.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutcome {
    pub list: RankedList,
    pub warning: Option<String>,
}

pub struct SearchEngine {
    records: Vec<SkillRecord>,
    snippets: Vec<String>,
    by_id: HashMap<String, usize>,
    lexical: InvertedIndex,
    dense: DenseIndex,
    provider: Arc<dyn EmbeddingProvider>,
    config: EngineConfig,
    retry: RetryPolicy,
}

impl std::fmt::Debug for SearchEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SearchEngine")
            .field("docs", &self.records.len())
            .field("provider", &self.provider.info())
            .field("config", &self.config)
            .finish()
    }
}

impl SearchEngine {
    /// Binds prebuilt indexes to their manifest; all three must share ordinals.
    pub fn new(
        manifest: CorpusManifest,
        lexical: InvertedIndex,
        dense: DenseIndex,
        provider: Arc<dyn EmbeddingProvider>,
        config: EngineConfig,
    ) -> Result<Self, SearchError> {
        config.lexical.validate()?;
        config.semantic.validate()?;
        config.fusion.validate()?;
        let ids: Vec<&str> = manifest.records.iter().map(|r| r.skill_id.as_str()).collect();
        if lexical.skill_ids.iter().map(String::as_str).ne(ids.iter().copied()) {
            return Err(SearchError::Inconsistent("lexical index ordinals".into()));
        }
        if dense.skill_ids.iter().map(String::as_str).ne(ids.iter().copied()) {
            return Err(SearchError::Inconsistent("vector store ordinals".into()));
        }
        dense.check_provider(provider.as_ref())?;

        let records = manifest.records;
        let snippets = records.iter().map(|r| make_snippet(&r.content)).collect();
        let by_id = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.skill_id.clone(), i))
            .collect();
        Ok(SearchEngine {
            records,
            snippets,
            by_id,
            lexical,
            dense,
            provider,
            config,
            retry: RetryPolicy::default(),
        })
    }

    /// Builds both indexes from scratch.
    pub fn build(
        manifest: CorpusManifest,
        provider: Arc<dyn EmbeddingProvider>,
        config: EngineConfig,
    ) -> Result<Self, SearchError> {
        let lexical = lexical::build_lexical_index(&manifest, &config.lexical)?;
        let dense = dense::build_dense_index(&manifest, provider.as_ref(), &config.semantic, RetryPolicy::default())?;
        Self::new(manifest, lexical, dense, provider, config)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn records(&self) -> &[SkillRecord] {
        &self.records
    }

    pub fn lexical(&self) -> &InvertedIndex {
        &self.lexical
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn record(&self, skill_id: &str) -> Option<&SkillRecord> {
        self.by_id.get(skill_id).map(|&i| &self.records[i])
    }

    pub fn snippet(&self, skill_id: &str) -> Option<&str> {
        self.by_id.get(skill_id).map(|&i| self.snippets[i].as_str())
    }

    pub fn embed_query(&self, query: &str) -> Result<EmbeddingVector, SearchError> {
        let mut v = dense::embed(&[query.to_string()], true, self.provider.as_ref(), &self.config.semantic, self.retry)?;
        Ok(v.pop().expect("one vector per text"))
    }

    pub fn keyword(&self, query: &str, top_k: usize) -> Result<RankedList, SearchError> {
        self.keyword_with(query, top_k, &self.config.lexical)
    }

    pub fn keyword_with(&self, query: &str, top_k: usize, config: &LexicalConfig) -> Result<RankedList, SearchError> {
        let ast = parse_query(query)?;
        Ok(self.lexical.search_keyword(&ast, top_k, config))
    }

    pub fn semantic(&self, query: &str, top_k: usize) -> Result<RankedList, SearchError> {
        let v = self.embed_query(query)?;
        Ok(self.dense.search_semantic(&v, top_k, &self.config.semantic)?)
    }

    pub fn semantic_with(
        &self,
        query_vec: &EmbeddingVector,
        top_k: usize,
        config: &SemanticConfig,
    ) -> Result<RankedList, SearchError> {
        Ok(self.dense.search_semantic(query_vec, top_k, config)?)
    }

    pub fn hybrid(&self, query: &str, top_k: usize, fusion: &FusionConfig) -> Result<HybridOutcome, SearchError> {
        fusion.validate()?;
        let v = self.embed_query(query)?;
        self.hybrid_with(query, &v, top_k, &self.config.lexical, &self.config.semantic, fusion)
    }

    /// Hybrid search with an already-embedded query and explicit configs.
    ///
    /// Each leg is cut at `max(candidate_depth, top_k)` before fusing.
    pub fn hybrid_with(
        &self,
        query: &str,
        query_vec: &EmbeddingVector,
        top_k: usize,
        lexical: &LexicalConfig,
        semantic: &SemanticConfig,
        fusion: &FusionConfig,
    ) -> Result<HybridOutcome, SearchError> {
        fusion.validate()?;
        let depth = fusion.candidate_depth.max(top_k);
        let semantic_list = self.dense.search_semantic(query_vec, depth, semantic)?;
        let (keyword_list, warning) = match parse_query(query) {
            Ok(ast) => (Some(self.lexical.search_keyword(&ast, depth, lexical)), None),
            Err(e) if fusion.semantic_weight > 0.0 => {
                (None, Some(format!("keyword query ignored: {e}")))
            }
            Err(e) => return Err(e.into()),
        };
        let mut lists = Vec::with_capacity(2);
        if let Some(kw) = &keyword_list {
            lists.push((Method::Keyword, kw));
        }
        lists.push((Method::Semantic, &semantic_list));
        let mut list = rrf_fuse(&lists, fusion)?;
        list.truncate(top_k);
        Ok(HybridOutcome { list, warning })
    }
}
