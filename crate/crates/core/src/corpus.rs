//! Skill corpus ingestion and the persisted manifest.
//!
//! A source tree looks like `<root>/<author>/<name>/SKILL.md` with a
//! `meta.json` sidecar next to it carrying the license tag and star count.
//! Ingestion keeps skills that pass, in order, the license allowlist, the
//! well-formedness checks, and exact-content deduplication.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::text;

pub const SKILL_FILE: &str = "SKILL.md";
pub const META_FILE: &str = "meta.json";
pub const MANIFEST_FORMAT: &str = "skillhub-manifest";
pub const MANIFEST_VERSION: u32 = 1;
/// Number of words kept by [`make_snippet`].
pub const SNIPPET_WORDS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("source root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("manifest {location} at byte offset {byte_offset}: {message}")]
    Parse {
        location: ManifestLocation,
        byte_offset: u64,
        message: String,
    },
}

/// Which part of a manifest file failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestLocation {
    Header,
    /// Zero-based index of the record line.
    Record(usize),
    /// Structural problem after all lines were read.
    Trailer,
}

impl fmt::Display for ManifestLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestLocation::Header => f.write_str("header"),
            ManifestLocation::Record(i) => write!(f, "record {i}"),
            ManifestLocation::Trailer => f.write_str("end of file"),
        }
    }
}

/// Declared license of a skill's source repository.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum License {
    Mit,
    Apache2,
    Other(String),
}

impl License {
    pub fn as_str(&self) -> &str {
        match self {
            License::Mit => "MIT",
            License::Apache2 => "Apache-2.0",
            License::Other(s) => s,
        }
    }

    /// The permissive set used by default: MIT and Apache-2.0.
    pub fn permissive() -> BTreeSet<License> {
        [License::Mit, License::Apache2].into_iter().collect()
    }
}

impl FromStr for License {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let key: String = trimmed
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '.')
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "mit" | "mitlicense" => License::Mit,
            "apache2.0" | "apache2" | "apachelicense2.0" | "apachelicense2" => License::Apache2,
            _ => License::Other(trimmed.to_string()),
        })
    }
}

impl From<String> for License {
    fn from(s: String) -> Self {
        let Ok(license) = s.parse();
        license
    }
}

impl From<License> for String {
    fn from(l: License) -> Self {
        l.as_str().to_string()
    }
}

impl fmt::Display for License {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelperFile {
    pub path: String,
    pub size: u64,
}

/// One ingested skill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRecord {
    /// `author--name`.
    pub skill_id: String,
    pub name: String,
    pub description: String,
    /// The SKILL.md file, byte for byte.
    pub content: String,
    pub helper_files: Vec<HelperFile>,
    pub license: License,
    pub github_stars: u64,
    /// Lowercase hex SHA-256 of the SKILL.md bytes.
    pub content_hash: String,
}

impl SkillRecord {
    /// Text embedded as the metadata representation.
    pub fn metadata_text(&self) -> String {
        format!("{}: {}", self.name, self.description)
    }

    /// Checks the record-level invariants, returning a reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("empty name".into());
        }
        if self.description.trim().is_empty() {
            return Err("empty description".into());
        }
        validate_skill_id(&self.skill_id)?;
        if self.content_hash != content_hash(self.content.as_bytes()) {
            return Err("content hash does not match content".into());
        }
        Ok(())
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn skill_id(author: &str, name: &str) -> String {
    format!("{author}--{name}")
}

/// A skill id has exactly one `--` separator with non-empty sides.
pub fn validate_skill_id(id: &str) -> Result<(), String> {
    let Some((author, name)) = id.split_once("--") else {
        return Err(format!("skill id {id:?} lacks a `--` separator"));
    };
    if author.is_empty() || name.is_empty() {
        return Err(format!("skill id {id:?} has an empty side"));
    }
    if name.contains("--") || name.starts_with('-') || author.ends_with('-') {
        return Err(format!("skill id {id:?} has an ambiguous separator"));
    }
    Ok(())
}

/// First [`SNIPPET_WORDS`] whitespace-delimited words, joined by single spaces.
pub fn make_snippet(content: &str) -> String {
    let mut out = String::new();
    for (i, word) in text::words(content).take(SNIPPET_WORDS).enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub scanned: usize,
    pub rejected_license: usize,
    pub rejected_invalid: usize,
    pub rejected_duplicate: usize,
    pub kept: usize,
}

impl IngestCounts {
    pub fn is_consistent(&self) -> bool {
        self.rejected_license + self.rejected_invalid + self.rejected_duplicate + self.kept
            == self.scanned
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub records: Vec<SkillRecord>,
    pub created_at: DateTime<Utc>,
    pub source_root: String,
    pub counts: IngestCounts,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    created_at: DateTime<Utc>,
    source_root: String,
    counts: IngestCounts,
}

impl CorpusManifest {
    /// Builds a manifest directly from records (no filtering), e.g. for tests
    /// and synthetic corpora. Records are sorted by skill id.
    pub fn from_records(mut records: Vec<SkillRecord>, source_root: impl Into<String>) -> Self {
        records.sort_by(|a, b| a.skill_id.cmp(&b.skill_id));
        let n = records.len();
        CorpusManifest {
            records,
            created_at: Utc::now(),
            source_root: source_root.into(),
            counts: IngestCounts {
                scanned: n,
                kept: n,
                ..IngestCounts::default()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            created_at: self.created_at,
            source_root: self.source_root.clone(),
            counts: self.counts,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, CorpusError> {
        read_manifest(input)
    }
}

pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    manifest.write_to(BufWriter::new(file)).map_err(io_err)
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_manifest(BufReader::new(file))
}

fn read_manifest<R: BufRead>(mut input: R) -> Result<CorpusManifest, CorpusError> {
    let mut offset: u64 = 0;
    let mut line = String::new();
    let mut header: Option<ManifestHeader> = None;
    let mut records = Vec::new();

    loop {
        line.clear();
        let n = input.read_line(&mut line).map_err(|e| CorpusError::Parse {
            location: header
                .as_ref()
                .map_or(ManifestLocation::Header, |_| ManifestLocation::Record(records.len())),
            byte_offset: offset,
            message: e.to_string(),
        })?;
        if n == 0 {
            break;
        }
        let body = line.trim_end_matches(['\n', '\r']);
        let parse_err = |location, e: serde_json::Error| CorpusError::Parse {
            location,
            byte_offset: offset + column_offset(body, e.column()),
            message: e.to_string(),
        };
        match &header {
            None => {
                let h: ManifestHeader = serde_json::from_str(body)
                    .map_err(|e| parse_err(ManifestLocation::Header, e))?;
                if h.format != MANIFEST_FORMAT || h.version != MANIFEST_VERSION {
                    return Err(CorpusError::Parse {
                        location: ManifestLocation::Header,
                        byte_offset: 0,
                        message: format!("unsupported manifest format {} v{}", h.format, h.version),
                    });
                }
                header = Some(h);
            }
            Some(_) => {
                let idx = records.len();
                let record: SkillRecord = serde_json::from_str(body)
                    .map_err(|e| parse_err(ManifestLocation::Record(idx), e))?;
                records.push(record);
            }
        }
        offset += n as u64;
    }

    let Some(header) = header else {
        return Err(CorpusError::Parse {
            location: ManifestLocation::Header,
            byte_offset: 0,
            message: "empty manifest".into(),
        });
    };
    if header.counts.kept != records.len() {
        return Err(CorpusError::Parse {
            location: ManifestLocation::Trailer,
            byte_offset: offset,
            message: format!(
                "header declares {} records but {} were read",
                header.counts.kept,
                records.len()
            ),
        });
    }
    Ok(CorpusManifest {
        records,
        created_at: header.created_at,
        source_root: header.source_root,
        counts: header.counts,
    })
}

/// serde_json reports 1-based columns counted in bytes; 0 means "end of input".
fn column_offset(line: &str, column: usize) -> u64 {
    if column == 0 {
        line.len() as u64
    } else {
        (column - 1).min(line.len()) as u64
    }
}

#[derive(Debug, Deserialize)]
struct SkillMeta {
    license: String,
    github_stars: u64,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
}

enum Outcome {
    Kept(SkillRecord),
    RejectedLicense,
    Invalid,
}

/// Scans `source_root` and returns the filtered, deduplicated manifest.
pub fn ingest(
    source_root: &Path,
    license_allowlist: &BTreeSet<License>,
) -> Result<CorpusManifest, CorpusError> {
    if !source_root.is_dir() {
        return Err(CorpusError::MissingRoot(source_root.to_path_buf()));
    }
    let mut candidates = list_candidates(source_root)?;
    candidates.sort_by(|a, b| a.0.cmp(&b.0));

    let outcomes: Vec<Outcome> = candidates
        .par_iter()
        .map(|(id, dir)| match load_candidate(id, dir, license_allowlist) {
            Ok(outcome) => outcome,
            Err(reason) => {
                warn!(skill = %id, "skipping skill: {reason}");
                Outcome::Invalid
            }
        })
        .collect();

    let mut counts = IngestCounts {
        scanned: candidates.len(),
        ..IngestCounts::default()
    };
    let mut valid = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Kept(r) => valid.push(r),
            Outcome::RejectedLicense => counts.rejected_license += 1,
            Outcome::Invalid => counts.rejected_invalid += 1,
        }
    }

    let (records, duplicates) = dedup_by_content(valid);
    counts.rejected_duplicate = duplicates;
    counts.kept = records.len();
    debug_assert!(counts.is_consistent());

    Ok(CorpusManifest {
        records,
        created_at: Utc::now(),
        source_root: source_root.display().to_string(),
        counts,
    })
}

/// Keeps one record per content hash: most stars, then smallest skill id.
/// Returns the survivors sorted by skill id and the number dropped.
pub fn dedup_by_content(records: Vec<SkillRecord>) -> (Vec<SkillRecord>, usize) {
    let total = records.len();
    let mut best: HashMap<String, SkillRecord> = HashMap::with_capacity(total);
    for record in records {
        match best.get(&record.content_hash) {
            Some(current)
                if (current.github_stars, std::cmp::Reverse(&current.skill_id))
                    >= (record.github_stars, std::cmp::Reverse(&record.skill_id)) => {}
            _ => {
                best.insert(record.content_hash.clone(), record);
            }
        }
    }
    let mut kept: Vec<SkillRecord> = best.into_values().collect();
    kept.sort_by(|a, b| a.skill_id.cmp(&b.skill_id));
    let dropped = total - kept.len();
    (kept, dropped)
}

fn is_hidden(name: &str) -> bool {
    name.starts_with('.')
}

fn list_candidates(root: &Path) -> Result<Vec<(String, PathBuf)>, CorpusError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let mut out = Vec::new();
    for author in fs::read_dir(root).map_err(io_err(root))? {
        let author = author.map_err(io_err(root))?;
        let author_name = author.file_name().to_string_lossy().into_owned();
        if is_hidden(&author_name) || !author.path().is_dir() {
            continue;
        }
        let author_path = author.path();
        let entries = match fs::read_dir(&author_path) {
            Ok(entries) => entries,
            Err(e) => {
                warn!(author = %author_name, "unreadable author directory: {e}");
                continue;
            }
        };
        for skill in entries.flatten() {
            let skill_name = skill.file_name().to_string_lossy().into_owned();
            if is_hidden(&skill_name) || !skill.path().is_dir() {
                continue;
            }
            out.push((skill_id(&author_name, &skill_name), skill.path()));
        }
    }
    Ok(out)
}

fn load_candidate(
    id: &str,
    dir: &Path,
    allowlist: &BTreeSet<License>,
) -> Result<Outcome, String> {
    let meta_raw = fs::read_to_string(dir.join(META_FILE))
        .map_err(|e| format!("cannot read {META_FILE}: {e}"))?;
    let meta: SkillMeta =
        serde_json::from_str(&meta_raw).map_err(|e| format!("malformed {META_FILE}: {e}"))?;
    let license: License = meta.license.into();
    if !allowlist.contains(&license) {
        return Ok(Outcome::RejectedLicense);
    }

    validate_skill_id(id)?;
    let bytes = fs::read(dir.join(SKILL_FILE)).map_err(|e| format!("cannot read {SKILL_FILE}: {e}"))?;
    let content_hash = content_hash(&bytes);
    let content = String::from_utf8(bytes).map_err(|_| format!("{SKILL_FILE} is not UTF-8"))?;

    let front = parse_front_matter(&content);
    let name = front.get("name").cloned().or(meta.name).unwrap_or_default();
    let description = front
        .get("description")
        .cloned()
        .or(meta.description)
        .unwrap_or_default();
    let name = name.trim().to_string();
    let description = description.trim().to_string();
    if name.is_empty() {
        return Err("empty name".into());
    }
    if description.is_empty() {
        return Err("empty description".into());
    }

    Ok(Outcome::Kept(SkillRecord {
        skill_id: id.to_string(),
        name,
        description,
        content,
        helper_files: helper_files(dir)?,
        license,
        github_stars: meta.github_stars,
        content_hash,
    }))
}

fn helper_files(dir: &Path) -> Result<Vec<HelperFile>, String> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| format!("cannot walk skill folder: {e}"))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walkdir yields children of its root");
        if rel == Path::new(SKILL_FILE) || rel == Path::new(META_FILE) {
            continue;
        }
        let size = entry
            .metadata()
            .map_err(|e| format!("cannot stat {}: {e}", rel.display()))?
            .len();
        let path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push(HelperFile { path, size });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(files)
}

/// Reads `key: value` pairs from a leading `---` fenced block.
///
/// Handles plain and quoted scalars plus `>`/`|` block scalars, which is
/// what SKILL.md front-matter uses in practice.
pub fn parse_front_matter(content: &str) -> HashMap<String, String> {
    let mut fields = HashMap::new();
    let content = content.strip_prefix('\u{feff}').unwrap_or(content);
    let mut lines = content.lines();
    if lines.next().map(str::trim_end) != Some("---") {
        return fields;
    }
    let block: Vec<&str> = lines.take_while(|l| l.trim_end() != "---").collect();

    let mut i = 0;
    while i < block.len() {
        let line = block[i];
        i += 1;
        if line.starts_with([' ', '\t']) || line.trim_start().starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim();
        let folded = value.starts_with('>');
        if folded || value.starts_with('|') {
            let mut parts = Vec::new();
            while i < block.len() && (block[i].starts_with([' ', '\t']) || block[i].trim().is_empty()) {
                parts.push(block[i].trim());
                i += 1;
            }
            let sep = if folded { " " } else { "\n" };
            let joined = parts.join(sep);
            fields.insert(key, joined.trim().to_string());
        } else {
            fields.insert(key, unquote(value).to_string());
        }
    }
    fields
}

fn unquote(v: &str) -> &str {
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}
