//! Ranked lists and weighted Reciprocal Rank Fusion.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Negated BM25: lower is better.
    Keyword,
    /// Cosine blend: higher is better.
    Semantic,
    Rrf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub skill_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub hits: Vec<Hit>,
    pub kind: ScoreKind,
}

impl RankedList {
    pub fn empty(kind: ScoreKind) -> Self {
        RankedList { hits: Vec::new(), kind }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.skill_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.hits.truncate(k);
    }

    /// No duplicate ids and ordering consistent with the score kind
    /// (ties ordered by skill id).
    pub fn is_well_formed(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        if !self.hits.iter().all(|h| seen.insert(h.skill_id.as_str())) {
            return false;
        }
        self.hits.windows(2).all(|w| {
            let (a, b) = (&w[0], &w[1]);
            let ord = match self.kind {
                ScoreKind::Keyword => a.score.total_cmp(&b.score),
                ScoreKind::Semantic | ScoreKind::Rrf => b.score.total_cmp(&a.score),
            };
            ord.then_with(|| a.skill_id.cmp(&b.skill_id)).is_lt()
        })
    }
}

/// Which retrieval leg a list came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Keyword,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub rrf_k: f64,
    pub keyword_weight: f64,
    pub semantic_weight: f64,
    /// Hits requested from each leg before fusing.
    pub candidate_depth: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            rrf_k: 60.0,
            keyword_weight: 0.5,
            semantic_weight: 0.5,
            candidate_depth: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("keyword_weight and semantic_weight cannot both be zero")]
    ZeroWeights,
    #[error("fusion weights must be finite and non-negative")]
    NegativeWeight,
    #[error("rrf_k must be positive")]
    InvalidK,
}

impl FusionConfig {
    pub fn weight(&self, method: Method) -> f64 {
        match method {
            Method::Keyword => self.keyword_weight,
            Method::Semantic => self.semantic_weight,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.rrf_k.is_finite() && self.rrf_k > 0.0) {
            return Err(FusionError::InvalidK);
        }
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.keyword_weight) || !ok(self.semantic_weight) {
            return Err(FusionError::NegativeWeight);
        }
        if self.keyword_weight == 0.0 && self.semantic_weight == 0.0 {
            return Err(FusionError::ZeroWeights);
        }
        Ok(())
    }
}

/// Fuses ranked lists: each skill scores `Σ w_s / (k + r_s)` over the lists
/// it appears in, with `r_s` its 1-based position in list `s`.
///
/// Contributions are summed in the order the lists are given.
pub fn rrf_fuse(lists: &[(Method, &RankedList)], config: &FusionConfig) -> Result<RankedList, FusionError> {
    config.validate()?;
    let mut order: Vec<&str> = Vec::new();
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for (method, list) in lists {
        let weight = config.weight(*method);
        for (pos, hit) in list.hits.iter().enumerate() {
            let contribution = weight / (config.rrf_k + (pos + 1) as f64);
            match scores.get_mut(hit.skill_id.as_str()) {
                Some(s) => *s += contribution,
                None => {
                    order.push(&hit.skill_id);
                    scores.insert(&hit.skill_id, contribution);
                }
            }
        }
    }
    let mut hits: Vec<Hit> = order
        .into_iter()
        .map(|id| Hit {
            skill_id: id.to_string(),
            score: scores[id],
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.skill_id.cmp(&b.skill_id)));
    Ok(RankedList {
        hits,
        kind: ScoreKind::Rrf,
    })
}
