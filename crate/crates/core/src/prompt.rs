//! Prompt templates and rendering.
//!
//! Templates are plain text files with `<<name>>` placeholders. Substituted
//! content is escaped so a rendered prompt never carries `<<` or `>>`
//! residue, even when the embedded code uses shift operators.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::SubModule;
use crate::hashing::sha256_hex;
use crate::task::{IoMode, Task, TestCase};

pub const PLACEHOLDERS: &[&str] = &[
    "problem",
    "question_guide",
    "sub_modules",
    "example_test",
    "one_shot_input",
    "one_shot_output",
    "program",
];

/// Upper bound on synthetic test cases requested from the model.
pub const MAX_SYNTHETIC_TESTS: usize = 20;

const BUILTIN_COT: &str = include_str!("../templates/cot.txt");
const BUILTIN_REVISION: &str = include_str!("../templates/revision.txt");
const BUILTIN_TESTGEN: &str = include_str!("../templates/testgen.txt");
const BUILTIN_QUALITY_EVAL: &str = include_str!("../templates/quality_eval.txt");
const BUILTIN_ONESHOT_INPUT: &str = include_str!("../templates/oneshot_input.txt");
const BUILTIN_ONESHOT_OUTPUT: &str = include_str!("../templates/oneshot_output.txt");

const ESCAPE_JOINER: char = '\u{200B}';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template `{template}` uses unknown placeholder `<<{name}>>`")]
    UnknownPlaceholder { template: TemplateName, name: String },
    #[error("template `{template}` has unterminated or stray marker near byte {offset}")]
    StrayMarker { template: TemplateName, offset: usize },
    #[error("template `{template}` is missing required placeholder `<<{name}>>`")]
    MissingPlaceholder { template: TemplateName, name: &'static str },
    #[error("template `{template}` must not contain `<<{name}>>`")]
    ForbiddenPlaceholder { template: TemplateName, name: &'static str },
    #[error("no value supplied for `<<{name}>>` in template `{template}`")]
    Unresolved { template: TemplateName, name: String },
    #[error("task `{0}` has an empty description")]
    EmptyDescription(String),
    #[error("revision prompt needs at least one feedback item")]
    EmptyFeedback,
    #[error("revision prompts start at round 1, got round {0}")]
    RevisionRoundZero(usize),
    #[error("cannot evaluate an empty program")]
    EmptyProgram,
    #[error("failed to read template file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Cot,
    Revision,
    Testgen,
    QualityEval,
}

impl TemplateName {
    pub const ALL: [TemplateName; 4] = [
        TemplateName::Cot,
        TemplateName::Revision,
        TemplateName::Testgen,
        TemplateName::QualityEval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Cot => "cot",
            TemplateName::Revision => "revision",
            TemplateName::Testgen => "testgen",
            TemplateName::QualityEval => "quality_eval",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn parse(name: TemplateName, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let mut pieces = Vec::new();
        let mut rest = body.as_str();
        let mut offset = 0;
        while let Some(open) = rest.find("<<") {
            let text = &rest[..open];
            if let Some(pos) = text.find(">>") {
                return Err(PromptError::StrayMarker {
                    template: name,
                    offset: offset + pos,
                });
            }
            let after = &rest[open + 2..];
            let close = after.find(">>").ok_or(PromptError::StrayMarker {
                template: name,
                offset: offset + open,
            })?;
            let slot = &after[..close];
            if !PLACEHOLDERS.contains(&slot) {
                return Err(PromptError::UnknownPlaceholder {
                    template: name,
                    name: slot.to_string(),
                });
            }
            if !text.is_empty() {
                pieces.push(Piece::Text(text.to_string()));
            }
            pieces.push(Piece::Slot(slot.to_string()));
            let consumed = open + 2 + close + 2;
            offset += consumed;
            rest = &rest[consumed..];
        }
        if let Some(pos) = rest.find(">>") {
            return Err(PromptError::StrayMarker {
                template: name,
                offset: offset + pos,
            });
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }

        let template = Self { name, body, pieces };
        match name {
            TemplateName::Revision if !template.uses("sub_modules") => {
                return Err(PromptError::MissingPlaceholder {
                    template: name,
                    name: "sub_modules",
                })
            }
            TemplateName::Cot if template.uses("sub_modules") => {
                return Err(PromptError::ForbiddenPlaceholder {
                    template: name,
                    name: "sub_modules",
                })
            }
            _ => {}
        }
        Ok(template)
    }

    pub fn uses(&self, slot: &str) -> bool {
        self.pieces
            .iter()
            .any(|p| matches!(p, Piece::Slot(s) if s == slot))
    }

    pub fn checksum(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }

    /// Substitutes every placeholder. Values are escaped; an unresolved
    /// placeholder is an error.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(slot) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| k == slot)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::Unresolved {
                            template: self.name,
                            name: slot.clone(),
                        })?;
                    escape_markers_into(value, &mut out);
                }
            }
        }
        Ok(out)
    }
}

/// Breaks up every `<<` / `>>` run with a zero-width joiner so rendered text
/// keeps its visual form but carries no placeholder markers.
pub fn escape_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    escape_markers_into(text, &mut out);
    out
}

fn escape_markers_into(text: &str, out: &mut String) {
    let mut prev: Option<char> = None;
    for c in text.chars() {
        if (c == '<' || c == '>') && prev == Some(c) {
            out.push(ESCAPE_JOINER);
        }
        out.push(c);
        prev = Some(c);
    }
}

/// The four templates used by one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub cot: PromptTemplate,
    pub revision: PromptTemplate,
    pub testgen: PromptTemplate,
    pub quality_eval: PromptTemplate,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self {
            cot: PromptTemplate::parse(TemplateName::Cot, BUILTIN_COT).expect("builtin cot"),
            revision: PromptTemplate::parse(TemplateName::Revision, BUILTIN_REVISION)
                .expect("builtin revision"),
            testgen: PromptTemplate::parse(TemplateName::Testgen, BUILTIN_TESTGEN)
                .expect("builtin testgen"),
            quality_eval: PromptTemplate::parse(TemplateName::QualityEval, BUILTIN_QUALITY_EVAL)
                .expect("builtin quality_eval"),
        }
    }

    /// Loads `<name>.txt` files from `dir`; names without a file keep the
    /// built-in body.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        for name in TemplateName::ALL {
            let path = dir.join(name.file_name());
            if !path.exists() {
                continue;
            }
            let body = fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            *set.get_mut(name) = PromptTemplate::parse(name, body)?;
        }
        Ok(set)
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        match name {
            TemplateName::Cot => &self.cot,
            TemplateName::Revision => &self.revision,
            TemplateName::Testgen => &self.testgen,
            TemplateName::QualityEval => &self.quality_eval,
        }
    }

    fn get_mut(&mut self, name: TemplateName) -> &mut PromptTemplate {
        match name {
            TemplateName::Cot => &mut self.cot,
            TemplateName::Revision => &mut self.revision,
            TemplateName::Testgen => &mut self.testgen,
            TemplateName::QualityEval => &mut self.quality_eval,
        }
    }

    /// `(template name, sha256 of body)` pairs, in a fixed order.
    pub fn checksums(&self) -> Vec<(String, String)> {
        TemplateName::ALL
            .iter()
            .map(|n| (n.as_str().to_string(), self.get(*n).checksum()))
            .collect()
    }
}

/// The fixed demonstration appended to generation and revision prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShot {
    pub input: String,
    pub output: String,
}

impl OneShot {
    pub fn builtin() -> Self {
        Self {
            input: BUILTIN_ONESHOT_INPUT.trim_end().to_string(),
            output: BUILTIN_ONESHOT_OUTPUT.trim_end().to_string(),
        }
    }

    /// Reads `oneshot_input.txt` / `oneshot_output.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |file: &str| {
            let path = dir.join(file);
            fs::read_to_string(&path)
                .map(|s| s.trim_end().to_string())
                .map_err(|e| PromptError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
        };
        Ok(Self {
            input: read("oneshot_input.txt")?,
            output: read("oneshot_output.txt")?,
        })
    }

    pub fn checksum(&self) -> String {
        sha256_hex(format!("{}\u{0}{}", self.input, self.output).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_name: TemplateName,
    pub text: String,
    pub task_id: String,
    pub round_index: usize,
}

impl RenderedPrompt {
    /// SHA-256 of the prompt text, hex encoded.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }
}

/// One unit of revision feedback: a sub-module or a whole program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackItem {
    SubModule(SubModule),
    Program {
        sample_id: usize,
        round_index: usize,
        code: String,
    },
}

impl FeedbackItem {
    pub fn text(&self) -> String {
        match self {
            FeedbackItem::SubModule(m) => m.source(),
            FeedbackItem::Program { code, .. } => code.trim_end().to_string(),
        }
    }

    pub fn source_sample_id(&self) -> usize {
        match self {
            FeedbackItem::SubModule(m) => m.source_sample_id,
            FeedbackItem::Program { sample_id, .. } => *sample_id,
        }
    }

    /// Tie-break key: (sample id, position within the sample).
    pub fn order_key(&self) -> (usize, usize) {
        match self {
            FeedbackItem::SubModule(m) => (m.source_sample_id, m.ordinal),
            FeedbackItem::Program { sample_id, .. } => (*sample_id, 0),
        }
    }

    pub fn round_index(&self) -> usize {
        match self {
            FeedbackItem::SubModule(m) => m.round_index,
            FeedbackItem::Program { round_index, .. } => *round_index,
        }
    }
}

pub fn question_guide(task: &Task) -> String {
    match (task.io_mode, task.fn_name.as_deref()) {
        (IoMode::CallBased, Some(name)) => format!(
            "define a function named `{name}` that takes the test arguments as parameters and returns the answer; do not read from standard input or print the result."
        ),
        _ => "read its input from standard input (for example with `input()` or `sys.stdin`) and print its answer to standard output.".to_string(),
    }
}

pub fn build_cot_prompt(
    templates: &TemplateSet,
    task: &Task,
    one_shot: &OneShot,
) -> Result<RenderedPrompt, PromptError> {
    if task.description.trim().is_empty() {
        return Err(PromptError::EmptyDescription(task.id.clone()));
    }
    let guide = question_guide(task);
    let text = templates.cot.render(&[
        ("problem", task.description.trim_end()),
        ("question_guide", &guide),
        ("one_shot_input", &one_shot.input),
        ("one_shot_output", &one_shot.output),
    ])?;
    Ok(RenderedPrompt {
        template_name: TemplateName::Cot,
        text,
        task_id: task.id.clone(),
        round_index: 0,
    })
}

/// Renders the self-revision prompt for `round_index` with `feedback` placed
/// in the order given, separated by blank lines.
pub fn build_revision_prompt(
    templates: &TemplateSet,
    task: &Task,
    feedback: &[FeedbackItem],
    one_shot: &OneShot,
    round_index: usize,
) -> Result<RenderedPrompt, PromptError> {
    if task.description.trim().is_empty() {
        return Err(PromptError::EmptyDescription(task.id.clone()));
    }
    if feedback.is_empty() {
        return Err(PromptError::EmptyFeedback);
    }
    if round_index == 0 {
        return Err(PromptError::RevisionRoundZero(round_index));
    }
    let guide = question_guide(task);
    let modules = feedback
        .iter()
        .map(FeedbackItem::text)
        .collect::<Vec<_>>()
        .join("\n\n");
    let text = templates.revision.render(&[
        ("problem", task.description.trim_end()),
        ("question_guide", &guide),
        ("sub_modules", &modules),
        ("one_shot_input", &one_shot.input),
        ("one_shot_output", &one_shot.output),
    ])?;
    Ok(RenderedPrompt {
        template_name: TemplateName::Revision,
        text,
        task_id: task.id.clone(),
        round_index,
    })
}

/// Formats tests in the block layout the test-generation prompt asks for.
pub fn format_test_blocks(tests: &[TestCase]) -> String {
    tests
        .iter()
        .map(|t| {
            format!(
                "-----Input-----\n{}\n-----Output-----\n{}",
                t.input.trim_end(),
                t.expected_output.trim_end()
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn build_testgen_prompt(
    templates: &TemplateSet,
    task: &Task,
) -> Result<RenderedPrompt, PromptError> {
    let examples = format_test_blocks(&task.public_tests);
    let text = templates.testgen.render(&[
        ("problem", task.description.trim_end()),
        ("example_test", &examples),
    ])?;
    Ok(RenderedPrompt {
        template_name: TemplateName::Testgen,
        text,
        task_id: task.id.clone(),
        round_index: 0,
    })
}

/// Wraps `program` in a backtick fence longer than any backtick run it
/// contains.
fn fence_program(program: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in program.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    let fence = "`".repeat(longest.max(2) + 1);
    format!("{fence}python\n{}\n{fence}", program.trim_end())
}

pub fn build_quality_eval_prompt(
    templates: &TemplateSet,
    program: &str,
) -> Result<RenderedPrompt, PromptError> {
    if program.trim().is_empty() {
        return Err(PromptError::EmptyProgram);
    }
    let fenced = fence_program(program);
    let text = templates.quality_eval.render(&[("program", &fenced)])?;
    Ok(RenderedPrompt {
        template_name: TemplateName::QualityEval,
        text,
        task_id: String::new(),
        round_index: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScores {
    pub modularity: u8,
    pub reusability: u8,
}

/// Reads the `Modularity: N` / `Reusability: N` answer lines.
pub fn parse_quality_scores(text: &str) -> Option<QualityScores> {
    let mut modularity = None;
    let mut reusability = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let score = value
            .trim()
            .trim_matches('*')
            .split_whitespace()
            .next()
            .and_then(|v| v.parse::<u8>().ok())
            .filter(|v| *v <= 5);
        match key.trim().trim_matches('*').to_ascii_lowercase().as_str() {
            "modularity" => modularity = modularity.or(score),
            "reusability" => reusability = reusability.or(score),
            _ => {}
        }
    }
    Some(QualityScores {
        modularity: modularity?,
        reusability: reusability?,
    })
}
