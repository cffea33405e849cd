//! Model-generated test cases, used only for filtering.

use std::sync::OnceLock;

use regex::Regex;

use crate::llm::{CompletionProvider, LlmError, SamplingParams};
use crate::prompt::{build_testgen_prompt, PromptError, TemplateSet, MAX_SYNTHETIC_TESTS};
use crate::task::{Task, TestCase};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Marker {
    Input,
    Output,
}

fn marker(line: &str) -> Option<Marker> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:-{3,}|#+)?\s*(?:sample\s+|example\s+|test\s+)?(input|output)(?:\s*\d+)?\s*:?\s*-*\s*$").unwrap()
    });
    let caps = re.captures(line)?;
    if caps[1].eq_ignore_ascii_case("input") {
        Some(Marker::Input)
    } else {
        Some(Marker::Output)
    }
}

fn clean_block(lines: &[&str]) -> String {
    let kept: Vec<&str> = lines
        .iter()
        .copied()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();
    let text = kept.join("\n");
    text.trim_matches('\n').trim_end().to_string()
}

/// Reads `-----Input-----` / `-----Output-----` pairs from a completion.
///
/// An input block must be followed directly by an output block; unpaired
/// blocks and pairs with an empty output are dropped. At most
/// [`MAX_SYNTHETIC_TESTS`] pairs are returned, in document order.
pub fn parse_synthetic_tests(text: &str) -> Vec<TestCase> {
    let lines: Vec<&str> = text.lines().collect();
    let mut blocks: Vec<(Marker, String)> = Vec::new();
    let mut current: Option<(Marker, usize)> = None;
    for (i, line) in lines.iter().enumerate() {
        if let Some(m) = marker(line) {
            if let Some((prev, start)) = current {
                blocks.push((prev, clean_block(&lines[start..i])));
            }
            current = Some((m, i + 1));
        }
    }
    if let Some((prev, start)) = current {
        blocks.push((prev, clean_block(&lines[start..])));
    }

    let mut tests = Vec::new();
    let mut i = 0;
    while i < blocks.len() && tests.len() < MAX_SYNTHETIC_TESTS {
        match (&blocks[i], blocks.get(i + 1)) {
            ((Marker::Input, input), Some((Marker::Output, output))) => {
                // Outputs end at the first blank line, which drops trailing prose.
                let output = output.split("\n\n").next().unwrap_or("").trim_end();
                if !output.trim().is_empty() {
                    tests.push(TestCase::new(input.clone(), output));
                }
                i += 2;
            }
            _ => i += 1,
        }
    }
    tests
}

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] LlmError),
}

/// Asks the provider for test cases and parses the first completion.
pub fn generate_synthetic_tests(
    task: &Task,
    templates: &TemplateSet,
    provider: &dyn CompletionProvider,
    params: &SamplingParams,
) -> Result<Vec<TestCase>, SyntheticError> {
    let prompt = build_testgen_prompt(templates, task)?;
    let single = SamplingParams { n: 1, ..*params };
    let batch = provider.complete(&prompt, &single)?;
    let tests = batch
        .texts
        .first()
        .map(|t| parse_synthetic_tests(t))
        .unwrap_or_default();
    if tests.is_empty() {
        log::warn!("task {}: no parseable synthetic tests", task.id);
    }
    Ok(tests)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(i: usize) -> String {
        format!("-----Input-----\n{i} {i}\n-----Output-----\n{}\n", 2 * i)
    }

    #[test]
    fn twenty_pairs() {
        let text: String = (0..20).map(pair).collect::<Vec<_>>().join("\n");
        let tests = parse_synthetic_tests(&text);
        assert_eq!(tests.len(), 20);
        assert_eq!(tests[3], TestCase::new("3 3", "6"));
    }

    #[test]
    fn capped_at_twenty() {
        let text: String = (0..25).map(pair).collect::<Vec<_>>().join("\n");
        assert_eq!(parse_synthetic_tests(&text).len(), 20);
    }

    #[test]
    fn malformed_pairs_dropped() {
        let text = format!(
            "{}{}-----Input-----\n9\n{}-----Output-----\n5\n-----Input-----\n1\n-----Output-----\n\n",
            pair(1),
            pair(2),
            pair(3),
        );
        let tests = parse_synthetic_tests(&text);
        assert_eq!(tests, vec![TestCase::new("1 1", "2"), TestCase::new("2 2", "4"), TestCase::new("3 3", "6")]);
    }

    #[test]
    fn empty_completion() {
        assert!(parse_synthetic_tests("").is_empty());
        assert!(parse_synthetic_tests("I cannot generate tests.").is_empty());
    }

    #[test]
    fn trailing_prose_is_not_output() {
        let text = format!("{}\nThese cover the edge cases.\n", pair(4));
        assert_eq!(parse_synthetic_tests(&text), vec![TestCase::new("4 4", "8")]);
    }

    #[test]
    fn fenced_and_labelled_variants() {
        let text = "Sample Input 1:\n```\n3\n1 2 3\n```\nSample Output 1:\n```\n6\n```\n";
        assert_eq!(parse_synthetic_tests(text), vec![TestCase::new("3\n1 2 3", "6")]);
    }
}
