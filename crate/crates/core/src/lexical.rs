//! Field-weighted BM25 over name, description and (optionally) content.
//!
//! Each field is an independent Okapi BM25 index with its own document
//! frequencies and average length. A document's score is the weighted sum of
//! its per-field scores, which is how FTS5 applies column weights.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::fusion::{Hit, RankedList, ScoreKind};
use crate::query::QueryAst;
use crate::text;

pub const INDEX_FORMAT: &str = "skillhub-lexical";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LexicalError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("invalid lexical config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed index file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Name,
    Description,
    Content,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Name, Field::Description, Field::Content];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalConfig {
    pub weight_name: f64,
    pub weight_description: f64,
    pub weight_content: f64,
    pub k1: f64,
    pub b: f64,
    pub include_content_field: bool,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        LexicalConfig {
            weight_name: 10.0,
            weight_description: 5.0,
            weight_content: 5.0,
            k1: 1.2,
            b: 0.75,
            include_content_field: true,
        }
    }
}

impl LexicalConfig {
    pub fn weight(&self, field: Field) -> f64 {
        match field {
            Field::Name => self.weight_name,
            Field::Description => self.weight_description,
            Field::Content => self.weight_content,
        }
    }

    pub fn validate(&self) -> Result<(), LexicalError> {
        let weights = [self.weight_name, self.weight_description, self.weight_content];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LexicalError::InvalidConfig("field weights must be finite and >= 0".into()));
        }
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(LexicalError::InvalidConfig("k1 must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(LexicalError::InvalidConfig("b must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    /// Token positions within the field, ascending. Term frequency is the length.
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn tf(&self) -> u32 {
        self.positions.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldIndex {
    pub field: Field,
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub lengths: Vec<u32>,
    pub avg_len: f64,
}

impl FieldIndex {
    fn posting(&self, term: &str, doc: u32) -> Option<&Posting> {
        let list = self.postings.get(term)?;
        list.binary_search_by_key(&doc, |p| p.doc).ok().map(|i| &list[i])
    }

    fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    fn prefixed<'a>(&'a self, stem: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.postings
            .range::<str, _>((std::ops::Bound::Included(stem), std::ops::Bound::Unbounded))
            .map(|(t, _)| t)
            .take_while(move |t| t.starts_with(stem))
    }
}

/// Immutable inverted index; ordinals follow manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub fields: Vec<FieldIndex>,
    pub skill_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    docs: usize,
    fields: Vec<Field>,
}

pub fn build_lexical_index(
    manifest: &CorpusManifest,
    config: &LexicalConfig,
) -> Result<InvertedIndex, LexicalError> {
    config.validate()?;
    if manifest.is_empty() {
        return Err(LexicalError::EmptyCorpus);
    }
    let mut fields = vec![Field::Name, Field::Description];
    if config.include_content_field {
        fields.push(Field::Content);
    }

    let field_indexes = fields
        .par_iter()
        .map(|&field| {
            let tokenized: Vec<Vec<String>> = manifest
                .records
                .par_iter()
                .map(|r| {
                    text::tokenize(match field {
                        Field::Name => &r.name,
                        Field::Description => &r.description,
                        Field::Content => &r.content,
                    })
                })
                .collect();
            build_field(field, &tokenized)
        })
        .collect();

    Ok(InvertedIndex {
        fields: field_indexes,
        skill_ids: manifest.records.iter().map(|r| r.skill_id.clone()).collect(),
    })
}

fn build_field(field: Field, docs: &[Vec<String>]) -> FieldIndex {
    let mut postings: HashMap<&str, Vec<Posting>> = HashMap::new();
    let mut lengths = Vec::with_capacity(docs.len());
    for (doc, tokens) in docs.iter().enumerate() {
        let mut local: HashMap<&str, Vec<u32>> = HashMap::new();
        for (pos, tok) in tokens.iter().enumerate() {
            local.entry(tok.as_str()).or_default().push(pos as u32);
        }
        for (term, positions) in local {
            postings.entry(term).or_default().push(Posting {
                doc: doc as u32,
                positions,
            });
        }
        lengths.push(tokens.len() as u32);
    }
    let total: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
    FieldIndex {
        field,
        postings: postings.into_iter().map(|(t, p)| (t.to_string(), p)).collect(),
        avg_len: total as f64 / lengths.len() as f64,
        lengths,
    }
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.skill_ids.len()
    }

    pub fn field(&self, field: Field) -> Option<&FieldIndex> {
        self.fields.iter().find(|f| f.field == field)
    }

    /// Okapi BM25 of one term in one field of one document.
    fn term_score(&self, fi: &FieldIndex, term: &str, doc: u32, config: &LexicalConfig) -> f64 {
        let Some(posting) = fi.posting(term, doc) else {
            return 0.0;
        };
        self.bm25(fi, term, posting.tf(), doc, config)
    }

    fn bm25(&self, fi: &FieldIndex, term: &str, tf: u32, doc: u32, config: &LexicalConfig) -> f64 {
        let n = self.doc_count() as f64;
        let df = fi.df(term) as f64;
        let idf = ((n - df + 0.5) / (df + 0.5)).ln_1p();
        let tf = f64::from(tf);
        let len_ratio = f64::from(fi.lengths[doc as usize]) / fi.avg_len;
        let norm = config.k1 * (1.0 - config.b + config.b * len_ratio);
        idf * tf * (config.k1 + 1.0) / (tf + norm)
    }

    /// Concrete vocabulary terms that contribute to the score: every term,
    /// prefix expansion and phrase word outside a `NOT`.
    pub fn positive_terms(&self, ast: &QueryAst) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_positive(ast, &mut out);
        out
    }

    fn collect_positive(&self, ast: &QueryAst, out: &mut BTreeSet<String>) {
        match ast {
            QueryAst::Term(t) => {
                out.insert(t.clone());
            }
            QueryAst::Prefix(stem) => {
                for fi in &self.fields {
                    out.extend(fi.prefixed(stem).cloned());
                }
            }
            QueryAst::Phrase(terms) => out.extend(terms.iter().cloned()),
            QueryAst::And(children) | QueryAst::Or(children) => {
                for c in children {
                    self.collect_positive(c, out);
                }
            }
            QueryAst::Not(_) => {}
        }
    }

    /// BM25 score of one document, ignoring the boolean filter.
    pub fn score_bm25(&self, doc: u32, ast: &QueryAst, config: &LexicalConfig) -> f64 {
        let terms = self.positive_terms(ast);
        let mut total = 0.0;
        for fi in &self.fields {
            let field_sum: f64 = terms.iter().map(|t| self.term_score(fi, t, doc, config)).sum();
            total += config.weight(fi.field) * field_sum;
        }
        total
    }

    /// Whether `doc` satisfies the boolean structure of `ast`.
    pub fn matches(&self, doc: u32, ast: &QueryAst) -> bool {
        self.candidates(ast).contains(doc as usize)
    }

    /// Documents satisfying the boolean structure of `ast`.
    pub fn candidates(&self, ast: &QueryAst) -> FixedBitSet {
        let n = self.doc_count();
        match ast {
            QueryAst::Term(t) => {
                let mut set = FixedBitSet::with_capacity(n);
                for fi in &self.fields {
                    if let Some(list) = fi.postings.get(t) {
                        set.extend(list.iter().map(|p| p.doc as usize));
                    }
                }
                set
            }
            QueryAst::Prefix(stem) => {
                let mut set = FixedBitSet::with_capacity(n);
                for fi in &self.fields {
                    for term in fi.prefixed(stem) {
                        set.extend(fi.postings[term].iter().map(|p| p.doc as usize));
                    }
                }
                set
            }
            QueryAst::Phrase(terms) => self.phrase_docs(terms),
            QueryAst::And(children) => {
                let mut iter = children.iter();
                let mut set = iter.next().map_or_else(|| full(n), |c| self.candidates(c));
                for c in iter {
                    set.intersect_with(&self.candidates(c));
                }
                set
            }
            QueryAst::Or(children) => {
                let mut set = FixedBitSet::with_capacity(n);
                for c in children {
                    set.union_with(&self.candidates(c));
                }
                set
            }
            QueryAst::Not(child) => {
                let mut set = self.candidates(child);
                set.toggle_range(..);
                set
            }
        }
    }

    fn phrase_docs(&self, terms: &[String]) -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(self.doc_count());
        for fi in &self.fields {
            let lists: Option<Vec<&Vec<Posting>>> = terms.iter().map(|t| fi.postings.get(t)).collect();
            let Some(lists) = lists else { continue };
            for first in lists[0] {
                let doc = first.doc;
                let rest: Option<Vec<&Posting>> = lists[1..]
                    .iter()
                    .map(|l| l.binary_search_by_key(&doc, |p| p.doc).ok().map(|i| &l[i]))
                    .collect();
                let Some(rest) = rest else { continue };
                let consecutive = first.positions.iter().any(|&start| {
                    rest.iter()
                        .enumerate()
                        .all(|(i, p)| p.positions.binary_search(&(start + i as u32 + 1)).is_ok())
                });
                if consecutive {
                    set.insert(doc as usize);
                }
            }
        }
        set
    }

    /// All matching documents with their BM25 scores, best first.
    pub fn scored_matches(&self, ast: &QueryAst, config: &LexicalConfig) -> Vec<(u32, f64)> {
        let n = self.doc_count();
        let candidates = self.candidates(ast);
        let terms = self.positive_terms(ast);

        let mut totals = vec![0.0f64; n];
        let mut field_acc = vec![0.0f64; n];
        for fi in &self.fields {
            let weight = config.weight(fi.field);
            field_acc.iter_mut().for_each(|v| *v = 0.0);
            let mut touched = Vec::new();
            for term in &terms {
                let Some(list) = fi.postings.get(term) else { continue };
                for p in list {
                    let d = p.doc as usize;
                    if !candidates.contains(d) {
                        continue;
                    }
                    if field_acc[d] == 0.0 {
                        touched.push(d);
                    }
                    field_acc[d] += self.bm25(fi, term, p.tf(), p.doc, config);
                }
            }
            for d in touched {
                totals[d] += weight * field_acc[d];
            }
        }

        let mut hits: Vec<(u32, f64)> = candidates.ones().map(|d| (d as u32, totals[d])).collect();
        hits.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.skill_ids[a.0 as usize].cmp(&self.skill_ids[b.0 as usize]))
        });
        hits
    }

    /// Top-k keyword hits. Reported scores are negated BM25, so lower is better.
    pub fn search_keyword(&self, ast: &QueryAst, top_k: usize, config: &LexicalConfig) -> RankedList {
        let hits = self
            .scored_matches(ast, config)
            .into_iter()
            .take(top_k)
            .map(|(doc, score)| Hit {
                skill_id: self.skill_ids[doc as usize].clone(),
                score: negate(score),
            })
            .collect();
        RankedList {
            hits,
            kind: ScoreKind::Keyword,
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), LexicalError> {
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            docs: self.doc_count(),
            fields: self.fields.iter().map(|f| f.field).collect(),
        };
        serde_json::to_writer(&mut out, &header).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        serde_json::to_writer(&mut out, self).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self, LexicalError> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: IndexHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| LexicalError::Format(format!("header: {e}")))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(LexicalError::Format(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let index: InvertedIndex = serde_json::from_reader(input)
            .map_err(|e| LexicalError::Format(format!("body: {e}")))?;
        if index.doc_count() != header.docs {
            return Err(LexicalError::Format("document count disagrees with header".into()));
        }
        index.check_invariants().map_err(LexicalError::Format)?;
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), LexicalError> {
        self.write_to(BufWriter::new(fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, LexicalError> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }

    /// Ordinals in range, postings ascending, averages consistent.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.doc_count();
        for fi in &self.fields {
            if fi.lengths.len() != n {
                return Err(format!("{:?} has {} lengths for {n} docs", fi.field, fi.lengths.len()));
            }
            let mean = fi.lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / n as f64;
            if (mean - fi.avg_len).abs() > 1e-9 * mean.max(1.0) {
                return Err(format!("{:?} average length is stale", fi.field));
            }
            for (term, list) in &fi.postings {
                if list.windows(2).any(|w| w[0].doc >= w[1].doc) {
                    return Err(format!("postings for {term:?} are not strictly ascending"));
                }
                if list.iter().any(|p| p.doc as usize >= n || p.positions.is_empty()) {
                    return Err(format!("postings for {term:?} reference an invalid document"));
                }
            }
        }
        Ok(())
    }
}

fn full(n: usize) -> FixedBitSet {
    let mut set = FixedBitSet::with_capacity(n);
    set.insert_range(..);
    set
}

fn negate(score: f64) -> f64 {
    if score == 0.0 {
        0.0
    } else {
        -score
    }
}
