//! Deterministic synthetic skill corpora for benchmarks and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{content_hash, CorpusManifest, License, SkillRecord};

/// Skill count of the full collection the benchmark is sized against.
pub const REFERENCE_CORPUS_SKILLS: usize = 34_198;

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "zen", "dra", "pel", "qui", "bor", "cas", "fin", "gul", "hex",
    "jor", "lim", "mox", "nut", "pra", "sol", "tek",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub skills: usize,
    pub vocabulary: usize,
    pub authors: usize,
    pub seed: u64,
    pub description_words: (usize, usize),
    pub content_words: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            skills: REFERENCE_CORPUS_SKILLS,
            vocabulary: 20_000,
            authors: 2_000,
            seed: 42,
            description_words: (8, 24),
            content_words: (60, 240),
        }
    }
}

/// The `i`-th word of the synthetic vocabulary.
pub fn word(i: usize) -> String {
    let n = SYLLABLES.len();
    let mut out = String::new();
    let mut x = i;
    loop {
        out.push_str(SYLLABLES[x % n]);
        x /= n;
        if x == 0 {
            break;
        }
        x -= 1;
    }
    out
}

struct Sampler {
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
}

impl Sampler {
    fn new(cfg: &SynthConfig) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            zipf: Zipf::new(cfg.vocabulary as f64, 1.07).expect("valid zipf parameters"),
        }
    }

    fn word(&mut self) -> String {
        word(self.zipf.sample(&mut self.rng) as usize - 1)
    }

    fn words(&mut self, range: (usize, usize)) -> Vec<String> {
        let n = self.rng.random_range(range.0..=range.1);
        (0..n).map(|_| self.word()).collect()
    }
}

pub fn synthetic_records(cfg: &SynthConfig) -> Vec<SkillRecord> {
    let mut s = Sampler::new(cfg);
    (0..cfg.skills)
        .map(|i| {
            let author = format!("{}{}", word(s.rng.random_range(0..cfg.authors)), i % 7);
            let name_words = s.words((2, 3));
            let name = name_words.join("-");
            let description = s.words(cfg.description_words).join(" ");
            let body = s.words(cfg.content_words);
            let mut content = format!("---\nname: {name}\ndescription: {description}\n---\n\n# {name}\n\n");
            for chunk in body.chunks(12) {
                content.push_str(&chunk.join(" "));
                content.push_str(".\n");
            }
            let license = if s.rng.random_bool(0.7) { License::Mit } else { License::Apache2 };
            SkillRecord {
                skill_id: format!("{author}--{name}-{i}"),
                name,
                description,
                content_hash: content_hash(content.as_bytes()),
                content,
                helper_files: Vec::new(),
                license,
                github_stars: s.rng.random_range(0..5_000),
            }
        })
        .collect()
}

pub fn synthetic_manifest(cfg: &SynthConfig) -> CorpusManifest {
    CorpusManifest::from_records(synthetic_records(cfg), format!("synthetic:{}:{}", cfg.skills, cfg.seed))
}

/// Short queries drawn from the vocabulary of random skills, so most hit
/// something in both legs.
pub fn synthetic_queries(manifest: &CorpusManifest, count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = &manifest.records[rng.random_range(0..manifest.len())];
            let pool: Vec<&str> = r.name.split('-').chain(r.description.split(' ')).collect();
            let n = rng.random_range(1..=3).min(pool.len());
            let mut q: Vec<&str> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            q.dedup();
            q.join(" ")
        })
        .collect()
}
