//! Benchmark problems, dataset loading and public-test extraction.
//!
//! The canonical on-disk form is a directory holding one JSON record per task
//! plus an optional `manifest.json` that lists split membership. APPS-style
//! directories and CodeContests-style JSON/JSONL exports can be loaded
//! directly or converted once into the canonical form.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Name of the split-membership file inside a canonical dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset path {0} does not exist")]
    Missing(PathBuf),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("failed to serialize task {id}: {source}")]
    Serialize {
        id: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One input/expected-output pair.
///
/// In call-based mode `input` is a JSON array of arguments and
/// `expected_output` is the JSON-encoded return value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
}

impl TestCase {
    pub fn new(input: impl Into<String>, expected_output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: expected_output.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Introductory,
    Interview,
    Competition,
    #[default]
    Unknown,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Introductory,
        Difficulty::Interview,
        Difficulty::Competition,
        Difficulty::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Introductory => "introductory",
            Difficulty::Interview => "interview",
            Difficulty::Competition => "competition",
            Difficulty::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "introductory" => Ok(Difficulty::Introductory),
            "interview" => Ok(Difficulty::Interview),
            "competition" => Ok(Difficulty::Competition),
            "unknown" => Ok(Difficulty::Unknown),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoMode {
    Stdio,
    CallBased,
}

impl IoMode {
    pub fn as_str(self) -> &'static str {
        match self {
            IoMode::Stdio => "stdio",
            IoMode::CallBased => "call_based",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub difficulty: Difficulty,
    pub io_mode: IoMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_name: Option<String>,
    #[serde(default)]
    pub public_tests: Vec<TestCase>,
    #[serde(default)]
    pub private_tests: Vec<TestCase>,
}

impl Task {
    /// Checks the record-level invariants enforced by the loader.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty task id".into());
        }
        match (self.io_mode, self.fn_name.as_deref()) {
            (IoMode::CallBased, None) => return Err("call_based task without fn_name".into()),
            (IoMode::CallBased, Some(name)) if name.trim().is_empty() => {
                return Err("call_based task with empty fn_name".into())
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" | "val" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub tasks: Vec<Task>,
}

impl Dataset {
    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Writes the dataset in canonical form: one `<id>.json` per task and a
    /// manifest listing this dataset's split membership.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut ids = Vec::with_capacity(self.tasks.len());
        for task in &self.tasks {
            let path = dir.join(task_file_name(&task.id));
            let body = serde_json::to_string_pretty(task).map_err(|source| {
                DatasetError::Serialize {
                    id: task.id.clone(),
                    source,
                }
            })?;
            fs::write(&path, body + "\n").map_err(io_err(&path))?;
            ids.push(task.id.clone());
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        let mut manifest = if manifest_path.exists() {
            read_manifest(&manifest_path)?
        } else {
            Manifest {
                name: self.name.clone(),
                splits: BTreeMap::new(),
            }
        };
        manifest.name = self.name.clone();
        manifest.splits.insert(self.split, ids);
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, body + "\n").map_err(io_err(&manifest_path))?;
        Ok(())
    }
}

/// File name used for a task record; ids are sanitized to a portable subset.
pub fn task_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    name: String,
    #[serde(default)]
    splits: BTreeMap<Split, Vec<String>>,
}

fn read_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Apps,
    Codecontests,
    Generic,
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "apps" => Ok(SourceFormat::Apps),
            "codecontests" | "code_contests" => Ok(SourceFormat::Codecontests),
            "generic" | "canonical" => Ok(SourceFormat::Generic),
            other => Err(format!("unknown dataset format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub source: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: Vec<SkippedRecord>,
}

impl LoadReport {
    fn skip(&mut self, source: &Path, reason: impl Into<String>) {
        let reason = reason.into();
        log::warn!("skipping task record {}: {reason}", source.display());
        self.skipped.push(SkippedRecord {
            source: source.to_path_buf(),
            reason,
        });
    }
}

/// Loads every parseable task of `split` from `path`.
///
/// Malformed records are skipped and listed in the returned [`LoadReport`];
/// only a missing or unreadable root is fatal.
pub fn load_dataset(
    path: &Path,
    format: SourceFormat,
    split: Split,
) -> Result<(Dataset, LoadReport), DatasetError> {
    if !path.exists() {
        return Err(DatasetError::Missing(path.to_path_buf()));
    }
    let mut report = LoadReport::default();
    let (name, candidates) = match format {
        SourceFormat::Generic => load_generic(path, split, &mut report)?,
        SourceFormat::Apps => (dir_name(path), load_apps(path, &mut report)?),
        SourceFormat::Codecontests => (dir_name(path), load_codecontests(path, &mut report)?),
    };

    let mut seen = HashSet::new();
    let mut tasks = Vec::with_capacity(candidates.len());
    for (source, task) in candidates {
        if let Err(reason) = task.validate() {
            report.skip(&source, reason);
            continue;
        }
        if !seen.insert(task.id.clone()) {
            report.skip(&source, format!("duplicate task id `{}`", task.id));
            continue;
        }
        tasks.push(task);
    }
    report.loaded = tasks.len();
    Ok((Dataset { name, split, tasks }, report))
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut entries = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect::<Vec<_>>();
    entries.sort();
    Ok(entries)
}

fn load_generic(
    dir: &Path,
    split: Split,
    report: &mut LoadReport,
) -> Result<(String, Vec<(PathBuf, Task)>), DatasetError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        Some(read_manifest(&manifest_path)?)
    } else {
        None
    };

    let mut by_file = Vec::new();
    for path in sorted_entries(dir)? {
        if path.extension().and_then(|e| e.to_str()) != Some("json") || path == manifest_path {
            continue;
        }
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                report.skip(&path, e.to_string());
                continue;
            }
        };
        match serde_json::from_str::<Task>(&text) {
            Ok(task) => by_file.push((path, task)),
            Err(e) => report.skip(&path, format!("unparseable record: {e}")),
        }
    }

    match manifest {
        None => Ok((dir_name(dir), by_file)),
        Some(manifest) => {
            let wanted = manifest.splits.get(&split).cloned().unwrap_or_default();
            let mut ordered = Vec::with_capacity(wanted.len());
            for id in &wanted {
                if let Some(pos) = by_file.iter().position(|(_, t)| &t.id == id) {
                    ordered.push(by_file.swap_remove(pos));
                } else {
                    report.skip(&dir.join(task_file_name(id)), format!("manifest lists `{id}` but no valid record exists"));
                }
            }
            Ok((manifest.name, ordered))
        }
    }
}

/// Renders an APPS/CodeContests test value into the canonical text form.
fn stdio_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) if items.iter().all(Value::is_string) => Some(
            items
                .iter()
                .filter_map(Value::as_str)
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

fn same_test(a: &TestCase, b: &TestCase) -> bool {
    a.input.trim() == b.input.trim() && a.expected_output.trim() == b.expected_output.trim()
}

/// Private tests never repeat a public pair.
fn disjoint_private(public: &[TestCase], private: Vec<TestCase>) -> Vec<TestCase> {
    private
        .into_iter()
        .filter(|p| !public.iter().any(|q| same_test(p, q)))
        .collect()
}

fn load_apps(dir: &Path, report: &mut LoadReport) -> Result<Vec<(PathBuf, Task)>, DatasetError> {
    let mut out = Vec::new();
    for problem in sorted_entries(dir)? {
        if !problem.is_dir() {
            continue;
        }
        match apps_task(&problem) {
            Ok(task) => out.push((problem, task)),
            Err(reason) => report.skip(&problem, reason),
        }
    }
    Ok(out)
}

fn apps_task(problem: &Path) -> Result<Task, String> {
    let id = dir_name(problem);
    let description = fs::read_to_string(problem.join("question.txt"))
        .map_err(|e| format!("question.txt: {e}"))?;
    let io_text = fs::read_to_string(problem.join("input_output.json"))
        .map_err(|e| format!("input_output.json: {e}"))?;
    let io: Value =
        serde_json::from_str(&io_text).map_err(|e| format!("input_output.json: {e}"))?;
    let difficulty = match fs::read_to_string(problem.join("metadata.json")) {
        Ok(text) => {
            let meta: Value =
                serde_json::from_str(&text).map_err(|e| format!("metadata.json: {e}"))?;
            match meta.get("difficulty").and_then(Value::as_str) {
                Some(d) => d.parse()?,
                None => Difficulty::Unknown,
            }
        }
        Err(_) => Difficulty::Unknown,
    };

    let fn_name = io
        .get("fn_name")
        .and_then(Value::as_str)
        .map(str::to_string);
    let io_mode = if fn_name.is_some() {
        IoMode::CallBased
    } else {
        IoMode::Stdio
    };
    let inputs = io
        .get("inputs")
        .and_then(Value::as_array)
        .ok_or("input_output.json lacks `inputs`")?;
    let outputs = io
        .get("outputs")
        .and_then(Value::as_array)
        .ok_or("input_output.json lacks `outputs`")?;
    if inputs.len() != outputs.len() {
        return Err(format!(
            "{} inputs but {} outputs",
            inputs.len(),
            outputs.len()
        ));
    }
    let mut private = Vec::with_capacity(inputs.len());
    for (i, o) in inputs.iter().zip(outputs) {
        let test = match io_mode {
            IoMode::Stdio => TestCase::new(
                stdio_text(i).ok_or("null test input")?,
                stdio_text(o).ok_or("null expected output")?,
            ),
            IoMode::CallBased => {
                if o.is_null() {
                    return Err("null expected output".into());
                }
                TestCase::new(i.to_string(), o.to_string())
            }
        };
        private.push(test);
    }

    // Descriptions of call-based problems show examples as expressions, not
    // stdin/stdout blocks, so extraction only applies to stdio problems.
    let public = match io_mode {
        IoMode::Stdio => extract_public_tests(&description),
        IoMode::CallBased => Vec::new(),
    };
    let private = disjoint_private(&public, private);
    Ok(Task {
        id,
        description,
        difficulty,
        io_mode,
        fn_name,
        public_tests: public,
        private_tests: private,
    })
}

fn load_codecontests(
    dir: &Path,
    report: &mut LoadReport,
) -> Result<Vec<(PathBuf, Task)>, DatasetError> {
    let files: Vec<PathBuf> = if dir.is_file() {
        vec![dir.to_path_buf()]
    } else {
        sorted_entries(dir)?
    };
    let mut out = Vec::new();
    for path in files {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext != "json" && ext != "jsonl" {
            continue;
        }
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                report.skip(&path, e.to_string());
                continue;
            }
        };
        let records: Vec<(PathBuf, &str)> = if ext == "jsonl" {
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(n, l)| (PathBuf::from(format!("{}:{}", path.display(), n + 1)), l))
                .collect()
        } else {
            vec![(path.clone(), text.as_str())]
        };
        for (source, line) in records {
            match serde_json::from_str::<Value>(line)
                .map_err(|e| e.to_string())
                .and_then(|v| codecontests_task(&v))
            {
                Ok(task) => out.push((source, task)),
                Err(reason) => report.skip(&source, reason),
            }
        }
    }
    Ok(out)
}

fn codecontests_tests(record: &Value, key: &str) -> Result<Vec<TestCase>, String> {
    let Some(block) = record.get(key) else {
        return Ok(Vec::new());
    };
    let inputs = block
        .get("input")
        .and_then(Value::as_array)
        .ok_or(format!("`{key}` lacks `input`"))?;
    let outputs = block
        .get("output")
        .and_then(Value::as_array)
        .ok_or(format!("`{key}` lacks `output`"))?;
    if inputs.len() != outputs.len() {
        return Err(format!("`{key}` has mismatched input/output counts"));
    }
    inputs
        .iter()
        .zip(outputs)
        .map(|(i, o)| {
            Ok(TestCase::new(
                stdio_text(i).ok_or("null test input")?,
                stdio_text(o).ok_or("null expected output")?,
            ))
        })
        .collect()
}

/// CodeContests difficulty codes: 0 unknown, 1 easy, 2 medium, everything
/// above (hard tiers and Codeforces letter grades) competition.
fn codecontests_difficulty(value: Option<&Value>) -> Difficulty {
    match value {
        Some(Value::Number(n)) => match n.as_u64() {
            Some(0) | None => Difficulty::Unknown,
            Some(1) => Difficulty::Introductory,
            Some(2) => Difficulty::Interview,
            Some(_) => Difficulty::Competition,
        },
        Some(Value::String(s)) => match s.to_ascii_uppercase().as_str() {
            "EASY" => Difficulty::Introductory,
            "MEDIUM" => Difficulty::Interview,
            "UNKNOWN_DIFFICULTY" | "" => Difficulty::Unknown,
            other => other.parse().unwrap_or(Difficulty::Competition),
        },
        _ => Difficulty::Unknown,
    }
}

fn codecontests_task(record: &Value) -> Result<Task, String> {
    let id = record
        .get("name")
        .and_then(Value::as_str)
        .ok_or("record lacks `name`")?
        .to_string();
    let description = record
        .get("description")
        .and_then(Value::as_str)
        .ok_or("record lacks `description`")?
        .to_string();
    // Official public tests are used as-is; no rule-based extraction.
    let public = codecontests_tests(record, "public_tests")?;
    let mut private = codecontests_tests(record, "private_tests")?;
    private.extend(codecontests_tests(record, "generated_tests")?);
    let private = disjoint_private(&public, private);
    Ok(Task {
        id,
        description,
        difficulty: codecontests_difficulty(record.get("difficulty")),
        io_mode: IoMode::Stdio,
        fn_name: None,
        public_tests: public,
        private_tests: private,
    })
}

// ---------------------------------------------------------------------------
// Rule-based public-test extraction

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HeaderKind {
    ExampleSection,
    Io { kind: BlockKind, prefixed: bool },
    Other,
}

fn dash_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*-{3,}\s*(.*?)\s*-{3,}\s*$").unwrap())
}

fn io_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(sample|example)?\s*(input|output)s?\s*\d*\s*:?$").unwrap()
    })
}

fn example_section_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(examples?|samples?|sample tests?|example tests?|sample cases?|test cases?)\s*\d*\s*:?$")
            .unwrap()
    })
}

fn bare_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:sample\s+|example\s+)?(input|output)s?\s*\d*\s*(?::\s*(.*?))?\s*$")
            .unwrap()
    })
}

fn stop_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(explanation|notes?)\b").unwrap())
}

fn classify_header(name: &str) -> HeaderKind {
    let name = name.trim();
    if let Some(caps) = io_name_re().captures(name) {
        let kind = if caps[2].eq_ignore_ascii_case("input") {
            BlockKind::Input
        } else {
            BlockKind::Output
        };
        return HeaderKind::Io {
            kind,
            prefixed: caps.get(1).is_some(),
        };
    }
    if example_section_re().is_match(name) {
        return HeaderKind::ExampleSection;
    }
    HeaderKind::Other
}

fn clean_block(lines: &[&str]) -> String {
    let trimmed: Vec<&str> = lines.iter().map(|l| l.trim_end()).collect();
    let start = trimmed.iter().position(|l| !l.is_empty());
    let end = trimmed.iter().rposition(|l| !l.is_empty());
    match (start, end) {
        (Some(s), Some(e)) => trimmed[s..=e].join("\n"),
        _ => String::new(),
    }
}

/// Scans a region for bare `Input` / `Output:` marker lines.
fn scan_bare_markers(lines: &[&str]) -> Vec<(BlockKind, String)> {
    let mut blocks = Vec::new();
    let mut current: Option<(BlockKind, Vec<&str>)> = None;
    for &line in lines {
        if let Some(caps) = bare_marker_re().captures(line) {
            if let Some((kind, body)) = current.take() {
                blocks.push((kind, clean_block(&body)));
            }
            let kind = if caps[1].eq_ignore_ascii_case("input") {
                BlockKind::Input
            } else {
                BlockKind::Output
            };
            let mut body = Vec::new();
            if let Some(inline) = caps.get(2) {
                if !inline.as_str().is_empty() {
                    body.push(inline.as_str());
                }
            }
            current = Some((kind, body));
        } else if stop_marker_re().is_match(line) {
            if let Some((kind, body)) = current.take() {
                blocks.push((kind, clean_block(&body)));
            }
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((kind, body)) = current {
        blocks.push((kind, clean_block(&body)));
    }
    blocks
}

/// Output blocks end at the first blank line; trailing prose after a sample
/// output is commentary, not expected output.
fn first_paragraph(text: &str) -> &str {
    text.split("\n\n").next().unwrap_or("").trim_end()
}

fn pair_blocks(blocks: Vec<(BlockKind, String)>) -> Vec<TestCase> {
    let mut tests = Vec::new();
    let mut pending: Option<String> = None;
    for (kind, text) in blocks {
        match kind {
            BlockKind::Input => pending = Some(text),
            BlockKind::Output => {
                let text = first_paragraph(&text).to_string();
                if let Some(input) = pending.take() {
                    if !text.is_empty() {
                        tests.push(TestCase::new(input, text));
                    }
                }
            }
        }
    }
    tests
}

/// Pulls example input/output pairs out of a problem statement.
///
/// Recognized layouts, in order of precedence:
/// 1. dash-fenced example sections (`-----Examples-----`) whose bodies hold
///    bare `Input` / `Output` marker lines;
/// 2. dash-fenced `Sample Input` / `Sample Output` headers;
/// 3. dash-fenced plain `Input` / `Output` headers;
/// 4. undecorated `Example:` lines followed by `Input:` / `Output:` lines.
///
/// Pairs are returned in document order; unmatched blocks are dropped.
pub fn extract_public_tests(description: &str) -> Vec<TestCase> {
    let lines: Vec<&str> = description.lines().collect();
    let headers: Vec<(usize, HeaderKind)> = lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| dash_header_re().captures(l).map(|c| (i, classify_header(&c[1]))))
        .collect();

    let section_end = |idx: usize| -> usize {
        headers
            .iter()
            .map(|(i, _)| *i)
            .find(|&i| i > idx)
            .unwrap_or(lines.len())
    };

    if headers.iter().any(|(_, k)| *k == HeaderKind::ExampleSection) {
        let mut blocks = Vec::new();
        for (i, kind) in &headers {
            if *kind == HeaderKind::ExampleSection {
                blocks.extend(scan_bare_markers(&lines[i + 1..section_end(*i)]));
            }
        }
        return pair_blocks(blocks);
    }

    let io_blocks = |want_prefixed: bool| -> Vec<(BlockKind, String)> {
        headers
            .iter()
            .filter_map(|(i, k)| match k {
                HeaderKind::Io { kind, prefixed } if *prefixed == want_prefixed => {
                    Some((*kind, clean_block(&lines[i + 1..section_end(*i)])))
                }
                _ => None,
            })
            .collect()
    };
    let prefixed = io_blocks(true);
    if !prefixed.is_empty() {
        return pair_blocks(prefixed);
    }
    let plain = io_blocks(false);
    if !plain.is_empty() {
        return pair_blocks(plain);
    }

    // Undecorated `Example 1:` style.
    let starts: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| example_section_re().is_match(l.trim()))
        .map(|(i, _)| i)
        .collect();
    let mut blocks = Vec::new();
    for (n, &start) in starts.iter().enumerate() {
        let end = starts.get(n + 1).copied().unwrap_or(lines.len());
        blocks.extend(scan_bare_markers(&lines[start + 1..end]));
    }
    pair_blocks(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dash_fenced_pair() {
        let tests = extract_public_tests("-----Input-----\n3\n-----Output-----\n6");
        assert_eq!(tests, vec![TestCase::new("3", "6")]);
    }

    #[test]
    fn no_markers_yields_nothing() {
        assert!(extract_public_tests("Compute the sum of two numbers.").is_empty());
    }

    // Layout taken from a Codeforces-derived APPS statement: the dash-fenced
    // Input/Output sections are the format spec, the examples live under
    // -----Examples-----.
    const CODEFORCES_STYLE: &str = "\
Polycarp has n coins.

-----Input-----

The first line contains one integer n (1 <= n <= 100).

-----Output-----

Print one integer.

-----Examples-----
Input
6
1 2 4 3 3 2

Output
2

Input
1
100

Output
1
";

    #[test]
    fn examples_section_two_blocks_in_order() {
        let tests = extract_public_tests(CODEFORCES_STYLE);
        assert_eq!(
            tests,
            vec![
                TestCase::new("6\n1 2 4 3 3 2", "2"),
                TestCase::new("1\n100", "1"),
            ]
        );
    }

    #[test]
    fn atcoder_sample_headers() {
        let desc = "Print A+B.\n-----Constraints-----\n - 1 <= A\n-----Input-----\nA B\n-----Output-----\nPrint it.\n-----Sample Input-----\n2 3\n\n-----Sample Output-----\n5\n\nWe print 5.";
        let tests = extract_public_tests(desc);
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].input, "2 3");
        assert_eq!(tests[0].expected_output, "5");
    }

    #[test]
    fn codechef_example_with_explanation() {
        let desc = "-----Example-----\nInput:\n2\n1 2\n\nOutput:\n3\n\n-----Explanation:-----\nSum.";
        assert_eq!(extract_public_tests(desc), vec![TestCase::new("2\n1 2", "3")]);
    }

    #[test]
    fn undecorated_examples_inline_values() {
        let desc = "Return the sum.\n\nExample 1:\nInput: 1 2\nOutput: 3\nExplanation: 1 + 2 = 3\n\nExample 2:\nInput: 5 5\nOutput: 10\n";
        assert_eq!(
            extract_public_tests(desc),
            vec![TestCase::new("1 2", "3"), TestCase::new("5 5", "10")]
        );
    }

    #[test]
    fn unmatched_input_dropped() {
        let desc = "-----Examples-----\nInput\n1\nInput\n2\nOutput\n4\n";
        assert_eq!(extract_public_tests(desc), vec![TestCase::new("2", "4")]);
    }

    #[test]
    fn validate_call_based_requires_fn_name() {
        let task = Task {
            id: "t".into(),
            description: "d".into(),
            difficulty: Difficulty::Unknown,
            io_mode: IoMode::CallBased,
            fn_name: None,
            public_tests: vec![],
            private_tests: vec![],
        };
        assert!(task.validate().is_err());
    }

    #[test]
    fn difficulty_defaults_to_unknown_when_omitted() {
        let task: Task =
            serde_json::from_str(r#"{"id":"a","description":"d","io_mode":"stdio"}"#).unwrap();
        assert_eq!(task.difficulty, Difficulty::Unknown);
    }

    #[test]
    fn codecontests_difficulty_codes() {
        assert_eq!(codecontests_difficulty(Some(&Value::from(0))), Difficulty::Unknown);
        assert_eq!(codecontests_difficulty(Some(&Value::from(1))), Difficulty::Introductory);
        assert_eq!(codecontests_difficulty(Some(&Value::from(2))), Difficulty::Interview);
        assert_eq!(codecontests_difficulty(Some(&Value::from(9))), Difficulty::Competition);
        assert_eq!(codecontests_difficulty(None), Difficulty::Unknown);
    }
}
