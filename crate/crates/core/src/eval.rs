//! Recall@k evaluation and the content-weight sweep.
//!
//! Recall@k for one task is `|truth ∩ top-k(retrieved)| / |truth|`; reports
//! average it over tasks. Lists shorter than `k` are scored on what they have.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::dense::{EmbeddingVector, SemanticConfig};
use crate::engine::{SearchEngine, SearchError};
use crate::lexical::LexicalConfig;

pub const DEFAULT_KS: [usize; 3] = [3, 5, 10];
/// Cutoff the sweep optimizes.
pub const SWEEP_OBJECTIVE_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("ground truth for task {0:?} is empty")]
    EmptyTruth(String),
    #[error("task {0:?} has no ground truth")]
    MissingTruth(String),
    #[error("ground truth for task {task:?} references unknown skill {skill:?}")]
    UnknownSkill { task: String, skill: String },
    #[error("ranked list for task {task:?} is malformed: {reason}")]
    MalformedList { task: String, reason: String },
    #[error("no tasks to evaluate")]
    NoTasks,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("search failed for task {task:?}: {source}")]
    Search {
        task: String,
        #[source]
        source: SearchError,
    },
}

/// Curated skills per task.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub tasks: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    tasks: BTreeMap<String, TruthEntry>,
}

#[derive(Serialize, Deserialize)]
struct TruthEntry {
    skills: Vec<String>,
}

impl GroundTruth {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: GroundTruthFile = serde_json::from_str(text)?;
        Ok(GroundTruth {
            tasks: file
                .tasks
                .into_iter()
                .map(|(task, e)| (task, e.skills.into_iter().collect()))
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let file = GroundTruthFile {
            tasks: self
                .tasks
                .iter()
                .map(|(t, s)| (t.clone(), TruthEntry { skills: s.iter().cloned().collect() }))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("ground truth serializes")
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = read(path)?;
        let truth = Self::from_json(&text).map_err(|source| EvalError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        truth.validate()?;
        Ok(truth)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match self.tasks.iter().find(|(_, s)| s.is_empty()) {
            Some((task, _)) => Err(EvalError::EmptyTruth(task.clone())),
            None => Ok(()),
        }
    }

    /// Every referenced skill must exist in the corpus.
    pub fn check_corpus<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<(), EvalError> {
        let known: HashSet<&str> = ids.into_iter().collect();
        for (task, skills) in &self.tasks {
            if let Some(skill) = skills.iter().find(|s| !known.contains(s.as_str())) {
                return Err(EvalError::UnknownSkill {
                    task: task.clone(),
                    skill: skill.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQueries {
    #[serde(default)]
    pub queries: Vec<String>,
    #[serde(default)]
    pub description: String,
}

/// Search queries and the task description for each task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet {
    pub tasks: BTreeMap<String, TaskQueries>,
}

impl QuerySet {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        serde_json::from_str(&read(path)?).map_err(|source| EvalError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Task descriptions, for direct search.
    pub fn descriptions(&self) -> BTreeMap<String, String> {
        self.tasks
            .iter()
            .map(|(t, q)| (t.clone(), q.description.clone()))
            .collect()
    }

    /// Queries for a task, falling back to its description.
    pub fn queries_for(&self, task: &str) -> Vec<String> {
        let Some(entry) = self.tasks.get(task) else {
            return Vec::new();
        };
        let queries: Vec<String> = entry
            .queries
            .iter()
            .filter(|q| !q.trim().is_empty())
            .cloned()
            .collect();
        if queries.is_empty() && !entry.description.trim().is_empty() {
            vec![entry.description.clone()]
        } else {
            queries
        }
    }
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn recall_at_k<S: AsRef<str>>(retrieved: &[S], truth: &BTreeSet<String>, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth(String::new()));
    }
    let found: HashSet<&str> = retrieved
        .iter()
        .take(k)
        .map(AsRef::as_ref)
        .filter(|id| truth.contains(*id))
        .collect();
    Ok(found.len() as f64 / truth.len() as f64)
}

/// Recall per cutoff for one method, per task and averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub label: String,
    pub recall: BTreeMap<usize, f64>,
    pub per_task: BTreeMap<String, BTreeMap<usize, f64>>,
}

impl MethodReport {
    /// Builds a report from per-task recalls, averaging arithmetically.
    pub fn from_per_task(label: impl Into<String>, ks: &[usize], per_task: BTreeMap<String, BTreeMap<usize, f64>>) -> Self {
        let n = per_task.len() as f64;
        let recall = ks
            .iter()
            .map(|&k| {
                let sum: f64 = per_task.values().map(|r| r[&k]).sum();
                (k, if per_task.is_empty() { 0.0 } else { sum / n })
            })
            .collect();
        MethodReport {
            label: label.into(),
            recall,
            per_task,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub methods: Vec<MethodReport>,
    /// Configuration the numbers were produced with.
    pub config: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    pub fn new(ks: &[usize]) -> Self {
        EvalReport {
            ks: ks.to_vec(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, method: MethodReport) {
        self.methods.push(method);
    }

    pub fn echo_engine_config(&mut self, engine: &SearchEngine) {
        let cfg = engine.config();
        let entries = [
            ("bm25_weight_name", cfg.lexical.weight_name.into()),
            ("bm25_weight_description", cfg.lexical.weight_description.into()),
            ("bm25_weight_content", cfg.lexical.weight_content.into()),
            ("bm25_k1", cfg.lexical.k1.into()),
            ("bm25_b", cfg.lexical.b.into()),
            ("semantic_content_weight", cfg.semantic.content_weight.into()),
            ("rrf_k", cfg.fusion.rrf_k.into()),
            ("keyword_weight", cfg.fusion.keyword_weight.into()),
            ("semantic_weight", cfg.fusion.semantic_weight.into()),
            ("embedding_model", engine.provider().info().to_string().into()),
        ];
        self.config
            .extend(entries.into_iter().map(|(k, v): (&str, serde_json::Value)| (k.to_string(), v)));
    }

    /// Aligned text table, recalls as percentages with one decimal.
    pub fn render_table(&self) -> String {
        let width = self
            .methods
            .iter()
            .map(|m| m.label.chars().count())
            .chain(std::iter::once("Method".len()))
            .max()
            .unwrap_or(6);
        let mut out = format!("{:<width$}", "Method");
        for k in &self.ks {
            let _ = write!(out, "  {:>9}", format!("Recall@{k}"));
        }
        out.push('\n');
        for m in &self.methods {
            let _ = write!(out, "{:<width$}", m.label);
            for k in &self.ks {
                let _ = write!(out, "  {:>9.1}", m.recall.get(k).copied().unwrap_or(f64::NAN) * 100.0);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check_ks(ks: &[usize]) -> Result<(), EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        Err(EvalError::InvalidK)
    } else {
        Ok(())
    }
}

/// Resolves each listed task against the ground truth; in non-strict mode
/// tasks without truth are skipped with a warning.
fn truth_for<'a>(truth: &'a GroundTruth, task: &str, strict: bool) -> Result<Option<&'a BTreeSet<String>>, EvalError> {
    match truth.tasks.get(task) {
        Some(set) if set.is_empty() => Err(EvalError::EmptyTruth(task.to_string())),
        Some(set) => Ok(Some(set)),
        None if strict => Err(EvalError::MissingTruth(task.to_string())),
        None => {
            warn!(task, "no ground truth for task; skipping");
            Ok(None)
        }
    }
}

/// Scores externally produced rankings (e.g. logged agent selections).
pub fn evaluate_ranked_lists(
    label: &str,
    lists: &BTreeMap<String, Vec<String>>,
    truth: &GroundTruth,
    ks: &[usize],
    strict: bool,
) -> Result<MethodReport, EvalError> {
    check_ks(ks)?;
    let mut per_task = BTreeMap::new();
    for (task, list) in lists {
        let mut seen = HashSet::new();
        if let Some(dup) = list.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(EvalError::MalformedList {
                task: task.clone(),
                reason: format!("duplicate skill id {dup:?}"),
            });
        }
        let Some(set) = truth_for(truth, task, strict)? else {
            continue;
        };
        let recalls = ks
            .iter()
            .map(|&k| recall_at_k(list, set, k).map(|r| (k, r)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        per_task.insert(task.clone(), recalls);
    }
    if per_task.is_empty() {
        return Err(EvalError::NoTasks);
    }
    Ok(MethodReport::from_per_task(label, ks, per_task))
}

/// Rankings produced by direct search: each task description is embedded as
/// a query and matched against the metadata vectors only.
pub fn direct_rankings(
    engine: &SearchEngine,
    tasks: &BTreeMap<String, String>,
    depth: usize,
) -> Result<BTreeMap<String, Vec<String>>, EvalError> {
    let config = SemanticConfig {
        content_weight: 0.0,
        ..engine.config().semantic.clone()
    };
    tasks
        .iter()
        .map(|(task, description)| {
            let search = || -> Result<Vec<String>, SearchError> {
                let v = engine.embed_query(description)?;
                let list = engine.semantic_with(&v, depth, &config)?;
                Ok(list.hits.into_iter().map(|h| h.skill_id).collect())
            };
            search()
                .map(|ids| (task.clone(), ids))
                .map_err(|source| EvalError::Search {
                    task: task.clone(),
                    source,
                })
        })
        .collect()
}

pub fn evaluate_direct(
    engine: &SearchEngine,
    tasks: &BTreeMap<String, String>,
    truth: &GroundTruth,
    ks: &[usize],
    strict: bool,
) -> Result<MethodReport, EvalError> {
    check_ks(ks)?;
    if strict {
        truth.check_corpus(engine.records().iter().map(|r| r.skill_id.as_str()))?;
    }
    let depth = *ks.iter().max().expect("ks checked non-empty");
    let lists = direct_rankings(engine, tasks, depth)?;
    evaluate_ranked_lists("Direct (semantic)", &lists, truth, ks, strict)
}

/// Reads `<task_id>.txt` files, one skill id per line, best first.
pub fn load_ranked_lists(dir: &Path) -> Result<BTreeMap<String, Vec<String>>, EvalError> {
    let io_err = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut lists = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let task = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let malformed = |reason: String| EvalError::MalformedList {
            task: task.clone(),
            reason,
        };
        let bytes = fs::read(&path).map_err(|e| malformed(e.to_string()))?;
        let text = String::from_utf8(bytes).map_err(|_| malformed("not UTF-8".into()))?;
        let mut list = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let id = line.trim();
            if id.is_empty() {
                continue;
            }
            if id.split_whitespace().nth(1).is_some() {
                return Err(malformed(format!("line {} holds more than one id", lineno + 1)));
            }
            if !seen.insert(id.to_string()) {
                return Err(malformed(format!("duplicate skill id {id:?} on line {}", lineno + 1)));
            }
            list.push(id.to_string());
        }
        lists.insert(task, list);
    }
    Ok(lists)
}

/// How a task's several queries combine into one recall.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryAggregation {
    /// Best query per task.
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub bm25_content_weights: Vec<f64>,
    pub content_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// 1-based rank among successful cells.
    pub rank: Option<usize>,
    pub bm25_content_weight: f64,
    pub content_weight: f64,
    pub recall: BTreeMap<usize, f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub aggregation: QueryAggregation,
    pub ks: Vec<usize>,
    pub tasks: usize,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&SweepCell> {
        self.cells.first().filter(|c| c.status == CellStatus::Ok)
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:>4}  {:>10}  {:>8}", "Rank", "BM25 w_c", "w");
        for k in &self.ks {
            let _ = write!(out, "  {:>9}", format!("Recall@{k}"));
        }
        out.push_str("  Status\n");
        for c in &self.cells {
            let rank = c.rank.map_or_else(|| "-".to_string(), |r| r.to_string());
            let _ = write!(out, "{rank:>4}  {:>10}  {:>8}", c.bm25_content_weight, c.content_weight);
            for k in &self.ks {
                match c.recall.get(k) {
                    Some(r) => {
                        let _ = write!(out, "  {:>9.1}", r * 100.0);
                    }
                    None => {
                        let _ = write!(out, "  {:>9}", "-");
                    }
                }
            }
            match &c.status {
                CellStatus::Ok => out.push_str("  ok\n"),
                CellStatus::Failed(reason) => {
                    let _ = writeln!(out, "  failed: {reason}");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }
}

/// Grid search over the BM25 content-field weight and the semantic content
/// weight, scored by direct hybrid search with each task's queries.
///
/// Cells are ranked by Recall@5 (descending), then smaller `w`, then smaller
/// BM25 content weight. A provider failure fails only the cell it hit.
pub fn sweep_weights(
    engine: &SearchEngine,
    grid: &SweepGrid,
    queries: &QuerySet,
    truth: &GroundTruth,
    aggregation: QueryAggregation,
    strict: bool,
) -> Result<SweepReport, EvalError> {
    let ks: Vec<usize> = DEFAULT_KS.to_vec();
    if grid.bm25_content_weights.is_empty() || grid.content_weights.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let mut tasks = Vec::new();
    for task in queries.tasks.keys() {
        let Some(set) = truth_for(truth, task, strict)? else {
            continue;
        };
        let qs = queries.queries_for(task);
        if qs.is_empty() {
            warn!(task, "task has neither queries nor a description; skipping");
            continue;
        }
        tasks.push((task.clone(), set, qs));
    }
    if tasks.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let depth = *ks.iter().max().expect("non-empty");

    let mut cache: HashMap<String, EmbeddingVector> = HashMap::new();
    let mut cells = Vec::new();
    for &bm25_w in &grid.bm25_content_weights {
        for &w in &grid.content_weights {
            let lexical = LexicalConfig {
                weight_content: bm25_w,
                ..engine.config().lexical.clone()
            };
            let semantic = SemanticConfig {
                content_weight: w,
                ..engine.config().semantic.clone()
            };
            let run = |cache: &mut HashMap<String, EmbeddingVector>| -> Result<BTreeMap<usize, f64>, SearchError> {
                lexical.validate()?;
                semantic.validate()?;
                let mut per_task = BTreeMap::new();
                for (task, set, qs) in &tasks {
                    let mut per_query = Vec::with_capacity(qs.len());
                    for q in qs {
                        let v = match cache.get(q) {
                            Some(v) => v.clone(),
                            None => {
                                let v = engine.embed_query(q)?;
                                cache.insert(q.clone(), v.clone());
                                v
                            }
                        };
                        let fused = engine.hybrid_with(q, &v, depth, &lexical, &semantic, &engine.config().fusion)?;
                        let ids: Vec<&str> = fused.list.ids().collect();
                        let recalls: BTreeMap<usize, f64> = ks
                            .iter()
                            .map(|&k| (k, recall_at_k(&ids, set, k).expect("k and truth validated")))
                            .collect();
                        per_query.push(recalls);
                    }
                    let combined = ks
                        .iter()
                        .map(|&k| {
                            let vals = per_query.iter().map(|r| r[&k]);
                            let v = match aggregation {
                                QueryAggregation::Max => vals.fold(0.0, f64::max),
                                QueryAggregation::Mean => vals.sum::<f64>() / per_query.len() as f64,
                            };
                            (k, v)
                        })
                        .collect();
                    per_task.insert(task.clone(), combined);
                }
                Ok(MethodReport::from_per_task("", &ks, per_task).recall)
            };
            let (recall, status) = match run(&mut cache) {
                Ok(recall) => (recall, CellStatus::Ok),
                Err(e) => {
                    warn!(bm25_content_weight = bm25_w, content_weight = w, "sweep cell failed: {e}");
                    (BTreeMap::new(), CellStatus::Failed(e.to_string()))
                }
            };
            cells.push(SweepCell {
                rank: None,
                bm25_content_weight: bm25_w,
                content_weight: w,
                recall,
                status,
            });
        }
    }

    let (mut ok, failed): (Vec<SweepCell>, Vec<SweepCell>) =
        cells.into_iter().partition(|c| c.status == CellStatus::Ok);
    ok.sort_by(|a, b| {
        let ra = a.recall[&SWEEP_OBJECTIVE_K];
        let rb = b.recall[&SWEEP_OBJECTIVE_K];
        rb.total_cmp(&ra)
            .then(a.content_weight.total_cmp(&b.content_weight))
            .then(a.bm25_content_weight.total_cmp(&b.bm25_content_weight))
    });
    for (i, c) in ok.iter_mut().enumerate() {
        c.rank = Some(i + 1);
    }
    ok.extend(failed);
    Ok(SweepReport {
        aggregation,
        ks,
        tasks: tasks.len(),
        cells: ok,
    })
}
