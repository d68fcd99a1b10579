#![allow(dead_code)]

pub mod gen;
pub mod oracle;
pub mod wire;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use skillhub_core::corpus::{content_hash, CorpusManifest, License, SkillRecord};
use skillhub_core::engine::{EngineConfig, SearchEngine};
use skillhub_core::HashEmbedder;

pub fn skill_md(name: &str, description: &str, body: &str) -> String {
    format!("---\nname: {name}\ndescription: {description}\n---\n\n{body}\n")
}

pub fn record(skill_id: &str, name: &str, description: &str, body: &str, stars: u64) -> SkillRecord {
    let content = skill_md(name, description, body);
    SkillRecord {
        skill_id: skill_id.to_string(),
        name: name.to_string(),
        description: description.to_string(),
        content_hash: content_hash(content.as_bytes()),
        content,
        helper_files: Vec::new(),
        license: License::Mit,
        github_stars: stars,
    }
}

pub fn manifest(records: Vec<SkillRecord>) -> CorpusManifest {
    CorpusManifest::from_records(records, "fixture")
}

pub fn engine(manifest: CorpusManifest) -> SearchEngine {
    SearchEngine::build(manifest, Arc::new(HashEmbedder::new(0)), EngineConfig::default()).unwrap()
}

/// `count` words "w1 w2 ...", for snippet checks.
pub fn numbered_words(count: usize) -> String {
    (1..=count).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
}

/// The ten-skill corpus behind the wire-format goldens.
pub fn wire_fixture() -> CorpusManifest {
    let mut records = vec![
        record(
            "acme--docker-deploy",
            "docker-deploy",
            "Build Docker images and deploy containerized applications",
            "# Docker deploy\n\nWrite a `Dockerfile`, build the image, push it to a registry and deploy the container.",
            1200,
        ),
        record(
            "acme--k8s-rollout",
            "k8s-rollout",
            "Roll out deployments to Kubernetes clusters",
            "# Rollouts\n\nApply manifests with kubectl, watch the rollout status and roll back on failure.",
            830,
        ),
        record(
            "frontend--react-testing",
            "react-testing",
            "Test React components with Testing Library",
            "# React Testing\n\nRender components, query by role and assert on user-visible behaviour.",
            2400,
        ),
        record(
            "frontend--react-hooks",
            "react-hooks",
            "Patterns for custom React hooks and state management",
            "# Hooks\n\nUse useState, useEffect and useReducer. Extract reusable hooks.",
            950,
        ),
        record(
            "frontend--vue-components",
            "vue-components",
            "Build Vue single file components",
            "# Vue\n\nSingle file components with script setup, props and emits.",
            610,
        ),
        record(
            "sec--jwt-auth",
            "jwt-auth",
            "Implement authentication with JSON Web Tokens",
            "# JWT auth\n\nIssue signed tokens, verify signatures and refresh expired sessions.",
            1500,
        ),
        record(
            "sec--oauth-login",
            "oauth-login",
            "Add OAuth login flows to web applications",
            "# OAuth\n\nAuthorization code flow with PKCE. Exchange the code for tokens.",
            700,
        ),
        record(
            "dev--code-review",
            "code-review",
            "Structured code review checklists for pull requests",
            "# Code review\n\nCheck correctness, tests and naming. Leave actionable review comments.",
            3100,
        ),
        record(
            "data--csv-cleaning",
            "csv-cleaning",
            "Clean and normalize messy CSV files with pandas",
            "# CSV\n\nDrop duplicates, fix encodings, parse dates and standardize column names.",
            420,
        ),
        record(
            "docs--long-guide",
            "long-guide",
            "A long writing guide used to check snippet truncation",
            &numbered_words(250),
            5,
        ),
    ];
    records[9].helper_files.push(skillhub_core::corpus::HelperFile {
        path: "templates/outline.md".into(),
        size: 512,
    });
    records[9].license = License::Apache2;
    manifest(records)
}

pub fn write_skill(root: &Path, author: &str, name: &str, skill_md: &str, meta: &str) {
    let dir = root.join(author).join(name);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("SKILL.md"), skill_md).unwrap();
    fs::write(dir.join("meta.json"), meta).unwrap();
}

/// Twenty skills: 12 MIT, 3 Apache-2.0, 5 GPL; one permissive pair with
/// byte-identical SKILL.md (stars 10 and 300) and one permissive skill with
/// an empty description.
pub fn write_ingest_fixture(root: &Path) {
    let meta = |license: &str, stars: u64| format!(r#"{{"license": "{license}", "github_stars": {stars}}}"#);
    for i in 0..12 {
        let name = format!("mit-skill-{i:02}");
        let desc = if i == 3 { String::new() } else { format!("MIT licensed helper number {i}") };
        let body = format!("# {name}\n\nSteps for task {i}.");
        write_skill(root, "alice", &name, &skill_md(&name, &desc, &body), &meta("MIT", 100 + i));
    }
    for i in 0..3 {
        let name = format!("apache-skill-{i}");
        let md = if i == 0 {
            skill_md("shared", "Shared skill copied between authors", "Same bytes.")
        } else {
            skill_md(&name, &format!("Apache helper {i}"), "Body.")
        };
        write_skill(root, "bob", &name, &md, &meta("Apache-2.0", 10));
    }
    // Byte-identical to bob/apache-skill-0 but with more stars.
    fs::remove_dir_all(root.join("alice").join("mit-skill-11")).unwrap();
    write_skill(
        root,
        "alice",
        "mit-skill-11",
        &skill_md("shared", "Shared skill copied between authors", "Same bytes."),
        &meta("MIT", 300),
    );
    for i in 0..5 {
        let name = format!("gpl-skill-{i}");
        write_skill(root, "carol", &name, &skill_md(&name, "Copyleft helper", "Body."), &meta("GPL-3.0", 50));
    }
}
