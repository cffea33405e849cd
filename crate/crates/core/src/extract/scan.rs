//! Line-level Python scanner.
//!
//! Tracks just enough lexical state (string literals, bracket depth,
//! backslash continuations, comments) to split source into logical lines and
//! to check indentation structure. It does not build an AST.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxIssue {
    pub line: usize,
    pub message: &'static str,
}

impl fmt::Display for SyntaxIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line + 1, self.message)
    }
}

impl std::error::Error for SyntaxIssue {}

/// A logical line spanning physical lines `first..=last`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalLine {
    pub first: usize,
    pub last: usize,
    pub indent: usize,
    /// Last non-comment character outside strings is `:` at bracket depth 0.
    pub opens_block: bool,
}

fn indent_width(line: &str) -> usize {
    let mut width = 0;
    for c in line.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            '\x0c' => width = 0,
            _ => break,
        }
    }
    width
}

fn is_blank_or_comment(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

#[derive(Clone, Copy)]
struct StrState {
    quote: char,
    triple: bool,
}

/// Splits `lines` into logical lines, validating string termination, bracket
/// balance and indentation.
pub fn logical_lines(lines: &[&str]) -> Result<Vec<LogicalLine>, SyntaxIssue> {
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    let mut expect_indent = false;

    let mut i = 0;
    while i < lines.len() {
        if is_blank_or_comment(lines[i]) {
            i += 1;
            continue;
        }
        let first = i;
        let indent = indent_width(lines[i]);

        let mut depth: i64 = 0;
        let mut string: Option<StrState> = None;
        let mut last_sig: Option<char> = None;
        let mut line = i;
        loop {
            let chars: Vec<char> = lines[line].chars().collect();
            let mut j = 0;
            let mut continued = false;
            while j < chars.len() {
                let c = chars[j];
                if let Some(s) = string {
                    if c == '\\' {
                        if j + 1 == chars.len() && !s.triple {
                            continued = true;
                        }
                        j += 2;
                        continue;
                    }
                    if c == s.quote {
                        if !s.triple {
                            string = None;
                        } else if chars.get(j + 1) == Some(&s.quote)
                            && chars.get(j + 2) == Some(&s.quote)
                        {
                            string = None;
                            j += 3;
                            last_sig = Some(c);
                            continue;
                        }
                    }
                    last_sig = Some(c);
                    j += 1;
                    continue;
                }
                match c {
                    '#' => break,
                    '\'' | '"' => {
                        let triple = chars.get(j + 1) == Some(&c) && chars.get(j + 2) == Some(&c);
                        string = Some(StrState { quote: c, triple });
                        j += if triple { 3 } else { 1 };
                        last_sig = Some(c);
                        continue;
                    }
                    '(' | '[' | '{' => depth += 1,
                    ')' | ']' | '}' => {
                        depth -= 1;
                        if depth < 0 {
                            return Err(SyntaxIssue {
                                line,
                                message: "unmatched closing bracket",
                            });
                        }
                    }
                    '\\' if j + 1 == chars.len() => {
                        continued = true;
                        j += 1;
                        continue;
                    }
                    _ => {}
                }
                if !c.is_whitespace() {
                    last_sig = Some(c);
                }
                j += 1;
            }
            if let Some(s) = string {
                if !s.triple && !continued {
                    return Err(SyntaxIssue {
                        line,
                        message: "unterminated string literal",
                    });
                }
            }
            let more = string.is_some() || depth > 0 || continued;
            if !more {
                break;
            }
            line += 1;
            if line >= lines.len() {
                let message = if string.is_some() {
                    "unterminated string literal"
                } else if depth > 0 {
                    "unclosed bracket"
                } else {
                    "continuation at end of file"
                };
                return Err(SyntaxIssue { line: line - 1, message });
            }
        }

        let top = *stack.last().expect("indent stack never empty");
        if expect_indent {
            if indent <= top {
                return Err(SyntaxIssue {
                    line: first,
                    message: "expected an indented block",
                });
            }
            stack.push(indent);
        } else if indent > top {
            return Err(SyntaxIssue {
                line: first,
                message: "unexpected indent",
            });
        } else if indent < top {
            while stack.last().is_some_and(|&t| t > indent) {
                stack.pop();
            }
            if stack.last() != Some(&indent) {
                return Err(SyntaxIssue {
                    line: first,
                    message: "unindent does not match any outer level",
                });
            }
        }

        let opens_block = last_sig == Some(':');
        expect_indent = opens_block;
        out.push(LogicalLine {
            first,
            last: line,
            indent,
            opens_block,
        });
        i = line + 1;
    }
    if expect_indent {
        return Err(SyntaxIssue {
            line: lines.len().saturating_sub(1),
            message: "expected an indented block at end of file",
        });
    }
    Ok(out)
}

const STATEMENT_KEYWORDS: &[&str] = &[
    "def", "async", "class", "import", "from", "for", "while", "if", "elif", "else", "try",
    "except", "finally", "with", "return", "pass", "break", "continue", "raise", "assert",
    "global", "nonlocal", "yield", "del", "print", "lambda", "match", "case", "await",
];

const BLOCK_KEYWORDS: &[&str] = &[
    "def", "async", "class", "for", "while", "if", "elif", "else", "try", "except", "finally",
    "with", "match", "case",
];

/// Heuristic: does the first physical line of a logical line read like a
/// Python statement rather than prose?
pub fn looks_like_statement(text: &str) -> bool {
    let t = text.trim();
    if t.starts_with('@') || t.starts_with('#') {
        return true;
    }
    let word: String = t
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect();
    if STATEMENT_KEYWORDS.contains(&word.as_str()) {
        let rest = &t[word.len()..];
        if !(rest.is_empty() || rest.starts_with([' ', ':', '(', '\t'])) {
            return false;
        }
        return match word.as_str() {
            w if BLOCK_KEYWORDS.contains(&w) => t.contains(':'),
            "from" => t.contains(" import "),
            _ => true,
        };
    }
    if word.is_empty() {
        // Bare literals / parenthesised expressions.
        return t.starts_with(['(', '[', '{', '"', '\'']);
    }
    if word.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return false;
    }
    // Identifier-led: assignment, call, attribute or subscript access.
    let rest = t[word.len()..].trim_start();
    rest.starts_with(['=', '(', '.', '[', ','])
        || ["+=", "-=", "*=", "/=", "//=", "%=", "**=", "|=", "&=", "^=", ">>=", "<<="]
            .iter()
            .any(|op| rest.starts_with(op))
}
