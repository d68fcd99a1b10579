//! One pass/fail line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skillhub_core::bench::{self, BenchConfig};
use skillhub_core::corpus::{self, License};
use skillhub_core::dense::blend;
use skillhub_core::engine::EngineConfig;
use skillhub_core::eval::{self, GroundTruth};
use skillhub_core::fusion::{rrf_fuse, Hit, Method};
use skillhub_core::lexical::build_lexical_index;
use skillhub_core::query::{parse_query, render_query};
use skillhub_core::service::emit_finding_skills_doc;
use skillhub_core::synth::{self, SynthConfig};
use skillhub_core::{
    FusionConfig, HashEmbedder, LexicalConfig, QueryAst, RankedList, ScoreKind, SearchEngine, SemanticConfig,
};

use common::{gen, oracle, wire};

type Outcome = Result<String, String>;

fn within(limit: Duration, started: Instant) -> Result<String, String> {
    let took = started.elapsed();
    if took < limit {
        Ok(format!("{:.2}s < {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
    } else {
        Err(format!("took {:.2}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
    }
}

fn ranked(ids: &[String], kind: ScoreKind) -> RankedList {
    let hits = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Hit {
            skill_id: id.clone(),
            score: if kind == ScoreKind::Keyword { -(100.0 - i as f64) } else { 1.0 - i as f64 / 200.0 },
        })
        .collect();
    RankedList { hits, kind }
}

fn rrf_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf05e);
    for case in 0..1000 {
        let (a, b) = gen::list_pair(&mut rng, 100);
        let (mut wk, ws): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        if wk == 0.0 && ws == 0.0 {
            wk = 0.5;
        }
        let cfg = FusionConfig {
            keyword_weight: wk,
            semantic_weight: ws,
            ..FusionConfig::default()
        };
        let (kl, sl) = (ranked(&a, ScoreKind::Keyword), ranked(&b, ScoreKind::Semantic));
        let fused = rrf_fuse(&[(Method::Keyword, &kl), (Method::Semantic, &sl)], &cfg).map_err(|e| e.to_string())?;
        let expected = oracle::rrf(&[(&a, wk), (&b, ws)], 60.0);
        let got: Vec<(String, f64)> = fused.hits.iter().map(|h| (h.skill_id.clone(), h.score)).collect();
        if got != expected {
            return Err(format!("case {case}: fused list differs from oracle"));
        }
    }
    within(Duration::from_secs(5), started).map(|t| format!("1000 random pairs exact, {t}"))
}

fn bm25_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xb325);
    let mut compared = 0usize;
    for case in 0..200 {
        let records = gen::corpus(&mut rng, 1, 50);
        let cfg = LexicalConfig {
            weight_name: if rng.random_bool(0.5) { 10.0 } else { rng.random_range(0.0..20.0) },
            weight_description: if rng.random_bool(0.5) { 5.0 } else { rng.random_range(0.0..20.0) },
            weight_content: if rng.random_bool(0.5) { 5.0 } else { rng.random_range(0.0..20.0) },
            include_content_field: rng.random_bool(0.8),
            ..LexicalConfig::default()
        };
        let manifest = common::manifest(records);
        let index = build_lexical_index(&manifest, &cfg).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let q = gen::query_string(&mut rng);
            let ast = parse_query(&q).map_err(|e| format!("case {case}: {q:?}: {e}"))?;
            let expected = oracle::bm25_scores(&manifest.records, &ast, &cfg);
            let list = index.search_keyword(&ast, manifest.len(), &cfg);
            let got: BTreeMap<String, f64> = list.hits.iter().map(|h| (h.skill_id.clone(), -h.score)).collect();
            if got.keys().ne(expected.keys()) {
                return Err(format!("case {case}: {q:?} matched {:?}, oracle {:?}", got.keys(), expected.keys()));
            }
            for (id, want) in &expected {
                if (got[id] - want).abs() > 1e-9 {
                    return Err(format!("case {case}: {q:?} {id}: {} vs oracle {want}", got[id]));
                }
                compared += 1;
            }
            if !list.is_well_formed() {
                return Err(format!("case {case}: {q:?} list out of order"));
            }
        }
    }

    // Same term, same tf and field length, once in name and once in description.
    let mut a = common::record("x--a", "alpha", "zulu", "", 0);
    let mut b = common::record("x--b", "zulu", "alpha", "", 0);
    a.content = "body text".into();
    b.content = "body text".into();
    let manifest = common::manifest(vec![a, b]);
    let cfg = LexicalConfig::default();
    let index = build_lexical_index(&manifest, &cfg).map_err(|e| e.to_string())?;
    let ast = parse_query("alpha").unwrap();
    let (sa, sb) = (index.score_bm25(0, &ast, &cfg), index.score_bm25(1, &ast, &cfg));
    if sa <= 0.0 || sa != 2.0 * sb {
        return Err(format!("name/description ratio {} ({sa} vs {sb})", sa / sb));
    }
    within(Duration::from_secs(30), started).map(|t| format!("{compared} scores within 1e-9, 2x ratio exact, {t}"))
}

fn semantic_oracle_equivalence() -> Outcome {
    let spot = blend(0.8, 0.4, 0.05);
    if (spot - 0.78).abs() > 1e-12 {
        return Err(format!("blend spot check gave {spot}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e4a);
    let mut rankings = 0;
    for case in 0..5 {
        let records = gen::corpus(&mut rng, 200, 200);
        let provider = Arc::new(HashEmbedder::new(rng.random()));
        let engine = SearchEngine::build(common::manifest(records), provider.clone(), EngineConfig::default())
            .map_err(|e| e.to_string())?;
        let dense = engine.dense();
        let ids = dense.skill_ids.clone();
        let meta: Vec<Vec<f32>> = (0..ids.len()).map(|i| dense.meta_row(i).to_vec()).collect();
        let content: Vec<Vec<f32>> = (0..ids.len()).map(|i| dense.content_row(i).to_vec()).collect();
        for (i, r) in engine.records().iter().enumerate() {
            let raw = provider.vector(&r.metadata_text());
            if oracle::cosine(&raw, &meta[i]) < 1.0 - 1e-6 {
                return Err(format!("case {case}: stored metadata row {i} is not the provider vector"));
            }
        }
        for _ in 0..3 {
            let q = gen::query_string(&mut rng);
            let qv = engine.embed_query(&q).map_err(|e| e.to_string())?;
            for w in [0.0, 0.05, 0.5, 1.0] {
                let cfg = SemanticConfig {
                    content_weight: w,
                    ..SemanticConfig::default()
                };
                let expected = oracle::semantic_ranking(&ids, &meta, &content, &qv.values, w);
                let got = engine.semantic_with(&qv, ids.len(), &cfg).map_err(|e| e.to_string())?;
                let got_ids: Vec<&str> = got.ids().collect();
                let want_ids: Vec<&str> = expected.iter().map(|(id, _)| id.as_str()).collect();
                if got_ids != want_ids {
                    return Err(format!("case {case}: w={w} {q:?} ranking differs from exhaustive oracle"));
                }
                if let Some((h, (_, s))) = got.hits.iter().zip(&expected).find(|(h, (_, s))| (h.score - s).abs() > 1e-12) {
                    return Err(format!("case {case}: w={w} {} scored {} vs {s}", h.skill_id, h.score));
                }
                let top = engine.semantic_with(&qv, 10, &cfg).map_err(|e| e.to_string())?;
                if top.ids().ne(want_ids.iter().take(10).copied()) {
                    return Err(format!("case {case}: w={w} top-10 is not the oracle prefix"));
                }
                rankings += 1;
            }
        }
    }
    Ok(format!("{rankings} rankings over 200-doc corpora match, 0.78 spot check"))
}

fn wire_goldens() -> Outcome {
    wire::check_goldens()?;
    let app = wire::app();
    let mut hits = 0;
    for (name, uri) in wire::CASES.iter().filter(|(n, _)| !n.starts_with("detail")) {
        let (_, _, body) = wire::get(&app, uri);
        hits += wire::check_hit_keys(&body, name.starts_with("hybrid")).map_err(|e| format!("{name}: {e}"))?;
    }
    let (status, _, body) = wire::get(&app, "/keyword?q=w250");
    if status != StatusCode::OK {
        return Err(format!("snippet query returned {status}"));
    }
    let value: serde_json::Value = serde_json::from_slice(&body).map_err(|e| e.to_string())?;
    let snippet = value[0]["skill_md_snippet"].as_str().ok_or("no snippet")?;
    let fixture = common::wire_fixture();
    let long = &fixture.records.iter().find(|r| r.skill_id == "docs--long-guide").unwrap().content;
    let expected: Vec<&str> = long.split_whitespace().take(100).collect();
    if long.split_whitespace().count() < 250 || snippet.split(' ').collect::<Vec<_>>() != expected {
        return Err(format!("snippet has {} words", snippet.split_whitespace().count()));
    }
    Ok(format!("{} goldens byte-equal, {hits} hits with exact key sets, 100-word snippet", wire::CASES.len()))
}

fn query_parser() -> Outcome {
    use QueryAst::*;
    let goldens = [
        ("react*", Prefix("react".into())),
        ("\"code review\"", Phrase(vec!["code".into(), "review".into()])),
        ("react OR vue", Or(vec![Term("react".into()), Term("vue".into())])),
    ];
    for (raw, want) in &goldens {
        let got = parse_query(raw).map_err(|e| format!("{raw}: {e}"))?;
        if &got != want {
            return Err(format!("{raw} parsed to {got:?}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a45);
    for case in 0..500 {
        let ast = gen::ast(&mut rng, 5);
        let rendered = render_query(&ast);
        match parse_query(&rendered) {
            Ok(back) if back == ast => {}
            Ok(back) => return Err(format!("case {case}: {rendered:?} came back as {back:?}")),
            Err(e) => return Err(format!("case {case}: {rendered:?}: {e}")),
        }
    }
    Ok("3 documented forms, 500 random round trips".into())
}

fn recall_harness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4eca);
    for case in 0..1000 {
        let (list, pool) = gen::list_pair(&mut rng, 30);
        let mut truth: BTreeSet<String> = pool.into_iter().take(rng.random_range(1..=8)).collect();
        if truth.is_empty() {
            truth.insert(list.first().cloned().unwrap_or_else(|| "s--0000".into()));
        }
        let mut prev = 0.0;
        for k in 1..=35 {
            let r = eval::recall_at_k(&list, &truth, k).map_err(|e| e.to_string())?;
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("case {case}: recall@{k} = {r}"));
            }
            if r < prev {
                return Err(format!("case {case}: recall fell from {prev} to {r} at k={k}"));
            }
            if r != oracle::recall(&list, &truth, k) {
                return Err(format!("case {case}: recall@{k} differs from direct count"));
            }
            prev = r;
        }
    }

    // Five tasks with hand-counted overlaps.
    let ids = |s: &str| -> Vec<String> { s.split_whitespace().map(String::from).collect() };
    let truth = GroundTruth::from_json(
        r#"{"tasks": {
            "t1": {"skills": ["a--1", "a--2", "a--3"]},
            "t2": {"skills": ["b--1"]},
            "t3": {"skills": ["c--1", "c--2"]},
            "t4": {"skills": ["d--1", "d--2", "d--3", "d--4"]},
            "t5": {"skills": ["e--1"]}
        }}"#,
    )
    .map_err(|e| e.to_string())?;
    let lists: BTreeMap<String, Vec<String>> = [
        ("t1", "a--1 x--1 x--2 a--2 x--3 x--4 x--5 x--6 x--7 x--8 x--9 a--3"),
        ("t2", "x--1 x--2 x--3 x--4 b--1"),
        ("t3", "c--2 c--1"),
        ("t4", "x--1 d--4 x--2 x--3 x--4 x--5 d--1 x--6 x--7 d--2 d--3"),
        ("t5", "x--1 x--2 x--3 x--4 x--5 x--6"),
    ]
    .into_iter()
    .map(|(t, l)| (t.to_string(), ids(l)))
    .collect();
    // recall@3: t1 1/3, t2 0, t3 1, t4 1/4, t5 0
    // recall@5: t1 2/3, t2 1, t3 1, t4 1/4, t5 0
    // recall@10: t1 2/3, t2 1, t3 1, t4 3/4, t5 0
    let want = [
        (3, (1.0 / 3.0 + 0.0 + 1.0 + 0.25 + 0.0) / 5.0),
        (5, (2.0 / 3.0 + 1.0 + 1.0 + 0.25 + 0.0) / 5.0),
        (10, (2.0 / 3.0 + 1.0 + 1.0 + 0.75 + 0.0) / 5.0),
    ];
    let report = eval::evaluate_ranked_lists("fixture", &lists, &truth, &[3, 5, 10], true).map_err(|e| e.to_string())?;
    for (k, expected) in want {
        let got = report.recall[&k];
        if (got - expected).abs() > 1e-12 {
            return Err(format!("fixture recall@{k} = {got}, expected {expected}"));
        }
    }
    Ok("1000 monotone bounded pairs, 5-task fixture within 1e-12".into())
}

fn ingestion_fixture() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::write_ingest_fixture(dir.path());
    let allow = License::permissive();
    let first = corpus::ingest(dir.path(), &allow).map_err(|e| e.to_string())?;
    let mut second = corpus::ingest(dir.path(), &allow).map_err(|e| e.to_string())?;
    let c = first.counts;
    let want = (20, 5, 1, 1, 13);
    let got = (c.scanned, c.rejected_license, c.rejected_invalid, c.rejected_duplicate, c.kept);
    if got != want {
        return Err(format!("counts {got:?}, expected {want:?}"));
    }
    let survivor = first.records.iter().find(|r| r.name == "shared").ok_or("duplicate pair lost both copies")?;
    if survivor.github_stars != 300 {
        return Err(format!("duplicate survivor has {} stars", survivor.github_stars));
    }
    second.created_at = first.created_at;
    if first.to_bytes() != second.to_bytes() {
        return Err("manifest bytes differ between runs".into());
    }
    Ok("counts {20, 5, 1, 1, 13}, identical manifest bytes".into())
}

fn finding_skills_doc() -> Outcome {
    let lines = |base: &str| {
        [
            format!("curl -s \"{base}/keyword?q=QUERY&top_k=10\""),
            format!("curl -s \"{base}/semantic?q=QUERY&top_k=10\""),
            format!("curl -s \"{base}/hybrid?q=QUERY&top_k=10&keyword_weight=0.5&semantic_weight=0.5\""),
            format!("curl -s \"{base}/detail/SKILL_ID\""),
            format!("curl -s \"{base}/hybrid?q=implement+authentication+JWT&top_k=10\""),
            format!("curl -s \"{base}/keyword?q=JWT&top_k=10\""),
            format!("curl -s \"{base}/hybrid?q=writing+unit+tests&top_k=10\""),
        ]
    };
    for base in ["http://localhost:8742", "http://10.0.0.5:9000"] {
        let doc = emit_finding_skills_doc(base).map_err(|e| e.to_string())?;
        for line in lines(base) {
            if !doc.lines().any(|l| l.trim() == line) {
                return Err(format!("{base}: missing line {line}"));
            }
        }
        if base != "http://localhost:8742" && doc.contains("8742") {
            return Err(format!("{base}: stale 8742 remains"));
        }
        if doc != emit_finding_skills_doc(base).unwrap() {
            return Err("rendering is not deterministic".into());
        }
    }
    if emit_finding_skills_doc("not a url").is_ok() {
        return Err("malformed base URL accepted".into());
    }
    Ok("all endpoint lines present, no stale port under a non-default base".into())
}

fn performance() -> Outcome {
    let cfg = BenchConfig {
        corpus: SynthConfig {
            skills: synth::REFERENCE_CORPUS_SKILLS,
            ..SynthConfig::default()
        },
        dim: 64,
        top_k: 10,
        ..BenchConfig::default()
    };
    let report = bench::run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let summary = format!(
        "{} skills, build {:.1}s, /hybrid p95 {:.2}ms over {} queries",
        report.skills, report.build_secs, report.p95_ms, report.queries
    );
    if report.p95_ms < 50.0 && report.build_secs < 300.0 {
        Ok(summary)
    } else {
        Err(format!("{summary} (limits: p95 < 50ms, build < 300s)"))
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("rrf oracle equivalence", rrf_oracle_equivalence),
        ("bm25 oracle equivalence", bm25_oracle_equivalence),
        ("semantic oracle equivalence", semantic_oracle_equivalence),
        ("wire-format goldens", wire_goldens),
        ("query-parser goldens", query_parser),
        ("recall harness", recall_harness),
        ("ingestion fixture", ingestion_fixture),
        ("finding-skills document", finding_skills_doc),
        ("performance", performance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
