//! Turning raw completions into programs and sub-modules.
//!
//! A sub-module is a top-level `def` of the final program: its header line,
//! its docstring and its body, kept verbatim so it can be embedded and
//! reinjected into later prompts.

mod scan;

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use scan::{looks_like_statement, SyntaxIssue};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubModule {
    pub name: String,
    /// Signature line(s), through the closing `:`.
    pub header: String,
    /// Docstring content without quotes; empty when absent.
    pub docstring: String,
    /// Everything after the header, docstring statement included.
    pub body: String,
    pub source_sample_id: usize,
    pub round_index: usize,
    /// Position among the sample's sub-modules.
    pub ordinal: usize,
}

impl SubModule {
    /// Header and body exactly as they appear in the program.
    pub fn source(&self) -> String {
        if self.body.is_empty() {
            self.header.clone()
        } else {
            format!("{}\n{}", self.header, self.body)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    NoCodeBlock,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub sample_id: usize,
    pub task_id: String,
    pub round_index: usize,
    pub raw_text: String,
    pub code: String,
    pub submodules: Vec<SubModule>,
    pub parse_status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl CandidateSolution {
    /// Runs solution and sub-module extraction on one completion.
    pub fn from_completion(task_id: &str, round_index: usize, sample_id: usize, raw_text: &str) -> Self {
        let (code, parse_status) = extract_solution(raw_text);
        let (submodules, diagnostic) = if parse_status == ParseStatus::Ok {
            match extract_submodules(&code) {
                Ok(mut modules) => {
                    for m in &mut modules {
                        m.source_sample_id = sample_id;
                        m.round_index = round_index;
                    }
                    (modules, None)
                }
                Err(issue) => (Vec::new(), Some(issue.to_string())),
            }
        } else {
            (Vec::new(), None)
        };
        Self {
            sample_id,
            task_id: task_id.to_string(),
            round_index,
            raw_text: raw_text.to_string(),
            code,
            submodules,
            parse_status,
            diagnostic,
        }
    }

    pub fn is_parsed(&self) -> bool {
        self.parse_status == ParseStatus::Ok
    }
}

fn fence_open_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^ {0,3}(`{3,})\s*([\w+#.-]*)\s*$").unwrap())
}

/// Contents of every fenced code block, in order. An unclosed final fence
/// (a completion cut off at the token limit) runs to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut open: Option<(usize, Vec<&str>)> = None;
    for line in text.lines() {
        match open.as_mut() {
            None => {
                if let Some(caps) = fence_open_re().captures(line) {
                    open = Some((caps[1].len(), Vec::new()));
                }
            }
            Some((ticks, body)) => {
                let t = line.trim();
                if t.len() >= *ticks && t.chars().all(|c| c == '`') {
                    blocks.push(body.join("\n"));
                    open = None;
                } else {
                    body.push(line);
                }
            }
        }
    }
    if let Some((_, body)) = open {
        blocks.push(body.join("\n"));
    }
    blocks
}

fn parses_as_program(lines: &[&str]) -> bool {
    match scan::logical_lines(lines) {
        Ok(logical) => {
            !logical.is_empty()
                && logical
                    .iter()
                    .all(|l| looks_like_statement(lines[l.first]))
        }
        Err(_) => false,
    }
}

/// Picks the final program out of a completion: the last fenced block, or
/// failing that the longest suffix that reads as a program.
pub fn extract_solution(raw_text: &str) -> (String, ParseStatus) {
    if raw_text.trim().is_empty() {
        return (String::new(), ParseStatus::Empty);
    }
    if let Some(last) = fenced_blocks(raw_text).pop() {
        let code = last.trim_end().to_string();
        if code.trim().is_empty() {
            return (String::new(), ParseStatus::Empty);
        }
        return (code, ParseStatus::Ok);
    }
    let lines: Vec<&str> = raw_text.lines().collect();
    for start in 0..lines.len() {
        let first = lines[start];
        if first.trim().is_empty() || first.starts_with([' ', '\t']) {
            continue;
        }
        if parses_as_program(&lines[start..]) {
            let code = lines[start..].join("\n").trim_end().to_string();
            return (code, ParseStatus::Ok);
        }
    }
    (String::new(), ParseStatus::NoCodeBlock)
}

fn def_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:async\s+)?def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap())
}

fn docstring_content(literal: &str) -> Option<String> {
    let t = literal.trim();
    let prefix_len = t
        .chars()
        .take_while(|c| matches!(c, 'r' | 'R' | 'u' | 'U'))
        .count();
    let t = &t[prefix_len..];
    for quote in ["\"\"\"", "'''", "\"", "'"] {
        if t.len() >= 2 * quote.len() && t.starts_with(quote) && t.ends_with(quote) {
            let inner = &t[quote.len()..t.len() - quote.len()];
            let lines: Vec<&str> = inner.lines().map(str::trim).collect();
            return Some(lines.join("\n").trim().to_string());
        }
    }
    None
}

/// One sub-module per top-level function definition, in source order.
///
/// Nested functions stay inside their parent; class bodies and top-level
/// statements are never sub-modules. When a name is defined twice the later
/// definition wins, matching what the interpreter would run.
pub fn extract_submodules(code: &str) -> Result<Vec<SubModule>, SyntaxIssue> {
    let lines: Vec<&str> = code.split('\n').collect();
    let logical = scan::logical_lines(&lines)?;

    let mut found: Vec<SubModule> = Vec::new();
    for (idx, ll) in logical.iter().enumerate() {
        if ll.indent != 0 {
            continue;
        }
        let Some(caps) = def_re().captures(lines[ll.first]) else {
            continue;
        };
        let name = caps[1].to_string();
        let header = lines[ll.first..=ll.last].join("\n");

        let (body, docstring) = if ll.opens_block {
            let end = logical[idx + 1..]
                .iter()
                .find(|l| l.indent == 0)
                .map(|l| l.first)
                .unwrap_or(lines.len());
            let mut stop = end;
            while stop > ll.last + 1 {
                let t = lines[stop - 1];
                let trimmed = t.trim();
                if trimmed.is_empty() || (trimmed.starts_with('#') && !t.starts_with([' ', '\t'])) {
                    stop -= 1;
                } else {
                    break;
                }
            }
            let body = lines[ll.last + 1..stop].join("\n");
            let docstring = logical
                .get(idx + 1)
                .filter(|l| l.indent > 0)
                .and_then(|l| docstring_content(&lines[l.first..=l.last].join("\n")))
                .unwrap_or_default();
            (body, docstring)
        } else {
            (String::new(), String::new())
        };

        found.push(SubModule {
            name,
            header,
            docstring,
            body,
            source_sample_id: 0,
            round_index: 0,
            ordinal: 0,
        });
    }

    let mut last_index: HashMap<&str, usize> = HashMap::new();
    for (i, m) in found.iter().enumerate() {
        last_index.insert(m.name.as_str(), i);
    }
    let keep: Vec<bool> = (0..found.len())
        .map(|i| last_index[found[i].name.as_str()] == i)
        .collect();
    let mut modules: Vec<SubModule> = found
        .into_iter()
        .zip(keep)
        .filter_map(|(m, k)| k.then_some(m))
        .collect();
    for (i, m) in modules.iter_mut().enumerate() {
        m.ordinal = i;
    }
    Ok(modules)
}
