//! Seeded random corpora, queries and ASTs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use skillhub_core::{QueryAst, SkillRecord};

pub const VOCAB: &[&str] = &[
    "react", "redux", "vue", "docker", "deploy", "kubernetes", "jwt", "auth", "oauth", "token", "test", "testing",
    "review", "code", "csv", "pandas", "clean", "build", "image", "api", "rest", "graph", "query", "cache", "log",
    "metric", "alert", "shell", "script", "rust",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<&'static str> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect()
}

/// Up to `max_docs` records with short overlapping texts. Content is
/// free text here, not a SKILL.md with front-matter.
pub fn corpus(rng: &mut ChaCha8Rng, min_docs: usize, max_docs: usize) -> Vec<SkillRecord> {
    let n = rng.random_range(min_docs..=max_docs);
    (0..n)
        .map(|i| {
            let name = words(rng, 1, 3).join("-");
            let description = words(rng, 3, 10).join(" ");
            let content = if rng.random_bool(0.1) { String::new() } else { words(rng, 5, 40).join(" ") };
            let mut r = super::record(&format!("a{}--s{i:03}", rng.random_range(0..5)), &name, &description, "", 0);
            r.content_hash = skillhub_core::corpus::content_hash(content.as_bytes());
            r.content = content;
            r
        })
        .collect()
}

/// A query string in the keyword grammar: one to three clauses of terms,
/// prefixes, phrases, OR and NOT.
pub fn query_string(rng: &mut ChaCha8Rng) -> String {
    let clauses = rng.random_range(1..=3);
    let mut parts = Vec::new();
    for i in 0..clauses {
        if i > 0 && rng.random_bool(0.3) {
            parts.push("OR".to_string());
        } else if i > 0 && rng.random_bool(0.15) {
            parts.push("NOT".to_string());
        }
        let w = VOCAB[rng.random_range(0..VOCAB.len())];
        let atom = match rng.random_range(0..10) {
            0 | 1 => format!("{}*", &w[..rng.random_range(1..=w.len().min(4))]),
            2 => format!("\"{} {}\"", w, VOCAB[rng.random_range(0..VOCAB.len())]),
            3 => w.to_uppercase(),
            _ => w.to_string(),
        };
        parts.push(atom);
    }
    parts.join(" ")
}

fn token(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let len = rng.random_range(1..=6);
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
        .collect()
}

/// Random valid AST of depth at most `depth`.
pub fn ast(rng: &mut ChaCha8Rng, depth: usize) -> QueryAst {
    let leaf = depth <= 1 || rng.random_bool(0.35);
    if leaf {
        return match rng.random_range(0..3) {
            0 => QueryAst::Term(token(rng)),
            1 => QueryAst::Prefix(token(rng)),
            _ => QueryAst::Phrase((0..rng.random_range(1..=3)).map(|_| token(rng)).collect()),
        };
    }
    match rng.random_range(0..3) {
        0 => QueryAst::Not(Box::new(ast(rng, depth - 1))),
        k => {
            let n = rng.random_range(2..=3);
            let children = (0..n).map(|_| ast(rng, depth - 1)).collect();
            if k == 1 {
                QueryAst::And(children)
            } else {
                QueryAst::Or(children)
            }
        }
    }
}

/// Two distinct-id ranked lists drawn from a shared pool.
pub fn list_pair(rng: &mut ChaCha8Rng, max_len: usize) -> (Vec<String>, Vec<String>) {
    let mut pool: Vec<String> = (0..(max_len * 3 / 2).max(4)).map(|i| format!("s--{i:04}")).collect();
    pool.shuffle(rng);
    let a: Vec<String> = pool.iter().take(rng.random_range(0..=max_len)).cloned().collect();
    pool.shuffle(rng);
    let b: Vec<String> = pool.iter().take(rng.random_range(0..=max_len)).cloned().collect();
    (a, b)
}
