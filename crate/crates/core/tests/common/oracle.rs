//! Brute-force reference implementations. They work from raw record text
//! and rank positions only, never from index internals.

use std::collections::{BTreeMap, BTreeSet};

use skillhub_core::{LexicalConfig, QueryAst, SkillRecord};

pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Field texts in the order name, description, content.
fn fields(r: &SkillRecord, with_content: bool) -> Vec<(Vec<String>, f64)> {
    vec![
        (tokens(&r.name), 0.0),
        (tokens(&r.description), 1.0),
        (if with_content { tokens(&r.content) } else { Vec::new() }, 2.0),
    ]
}

fn field_weight(cfg: &LexicalConfig, i: usize) -> f64 {
    [cfg.weight_name, cfg.weight_description, cfg.weight_content][i]
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn doc_matches(doc: &[(Vec<String>, f64)], ast: &QueryAst) -> bool {
    match ast {
        QueryAst::Term(t) => doc.iter().any(|(toks, _)| toks.contains(t)),
        QueryAst::Prefix(p) => doc.iter().any(|(toks, _)| toks.iter().any(|x| x.starts_with(p.as_str()))),
        QueryAst::Phrase(words) => doc.iter().any(|(toks, _)| contains_run(toks, words)),
        QueryAst::And(xs) => xs.iter().all(|x| doc_matches(doc, x)),
        QueryAst::Or(xs) => xs.iter().any(|x| doc_matches(doc, x)),
        QueryAst::Not(x) => !doc_matches(doc, x),
    }
}

fn positive_leaves(ast: &QueryAst, vocab: &BTreeSet<String>, out: &mut BTreeSet<String>) {
    match ast {
        QueryAst::Term(t) => {
            out.insert(t.clone());
        }
        QueryAst::Prefix(p) => out.extend(vocab.iter().filter(|v| v.starts_with(p.as_str())).cloned()),
        QueryAst::Phrase(words) => out.extend(words.iter().cloned()),
        QueryAst::And(xs) | QueryAst::Or(xs) => xs.iter().for_each(|x| positive_leaves(x, vocab, out)),
        QueryAst::Not(_) => {}
    }
}

/// Per-field BM25 score of every document that passes the boolean filter.
pub fn bm25_scores(records: &[SkillRecord], ast: &QueryAst, cfg: &LexicalConfig) -> BTreeMap<String, f64> {
    let docs: Vec<Vec<(Vec<String>, f64)>> = records.iter().map(|r| fields(r, cfg.include_content_field)).collect();
    let n = docs.len() as f64;
    let vocab: BTreeSet<String> = docs
        .iter()
        .flat_map(|d| d.iter().flat_map(|(t, _)| t.iter().cloned()))
        .collect();
    let mut terms = BTreeSet::new();
    positive_leaves(ast, &vocab, &mut terms);

    let mut out = BTreeMap::new();
    for (di, doc) in docs.iter().enumerate() {
        if !doc_matches(doc, ast) {
            continue;
        }
        let mut score = 0.0;
        for f in 0..3 {
            let avg = docs.iter().map(|d| d[f].0.len() as f64).sum::<f64>() / n;
            let len = doc[f].0.len() as f64;
            let mut field_sum = 0.0;
            for t in &terms {
                let df = docs.iter().filter(|d| d[f].0.contains(t)).count() as f64;
                let tf = doc[f].0.iter().filter(|x| *x == t).count() as f64;
                if df == 0.0 || tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                field_sum += idf * tf * (cfg.k1 + 1.0) / (tf + cfg.k1 * (1.0 - cfg.b + cfg.b * len / avg));
            }
            score += field_weight(cfg, f) * field_sum;
        }
        out.insert(records[di].skill_id.clone(), score);
    }
    out
}

/// Weighted RRF straight from the formula, summing lists in the given order.
pub fn rrf(lists: &[(&[String], f64)], k: f64) -> Vec<(String, f64)> {
    let ids: BTreeSet<&String> = lists.iter().flat_map(|(l, _)| l.iter()).collect();
    let mut scored: Vec<(String, f64)> = ids
        .into_iter()
        .map(|id| {
            let mut s = 0.0;
            for (list, w) in lists {
                if let Some(pos) = list.iter().position(|x| x == id) {
                    s += w / (k + (pos + 1) as f64);
                }
            }
            (id.clone(), s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Exhaustive blended-cosine ranking over all rows.
pub fn semantic_ranking(
    ids: &[String],
    meta: &[Vec<f32>],
    content: &[Vec<f32>],
    query: &[f32],
    w: f64,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), (1.0 - w) * cosine(query, &meta[i]) + w * cosine(query, &content[i])))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

pub fn recall(retrieved: &[String], truth: &BTreeSet<String>, k: usize) -> f64 {
    let hit = retrieved.iter().take(k).filter(|id| truth.contains(*id)).count();
    hit as f64 / truth.len() as f64
}
