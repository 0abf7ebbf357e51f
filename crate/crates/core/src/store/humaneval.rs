use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::Deserialize;

use super::{Difficulty, IoMode, Problem, Suite, TestCase, SCRIPT_LABEL};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct Record {
    task_id: String,
    prompt: String,
    #[serde(default)]
    entry_point: Option<String>,
    #[serde(default)]
    canonical_solution: String,
    test: String,
}

/// Ingests the HumanEval archive (`.jsonl` or `.jsonl.gz`).
pub fn ingest_humaneval(path: &Path) -> Result<Vec<Problem>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let gz = file.read(&mut magic).map_err(|e| Error::io(path, e))? == 2 && magic == [0x1f, 0x8b];
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn BufRead> = if gz {
        Box::new(BufReader::new(GzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };

    let mut problems = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|source| Error::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        problems.push(to_problem(record, path)?);
    }
    Ok(problems)
}

fn to_problem(record: Record, path: &Path) -> Result<Problem> {
    let entry_point = match record.entry_point {
        Some(e) if !e.trim().is_empty() => e,
        _ => {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                message: format!("{}: record has no entry point", record.task_id),
            })
        }
    };
    let example_tests = parse_docstring_examples(&record.prompt, &entry_point);
    if example_tests.is_empty() {
        log::info!(
            "{}: no parsable docstring example, editing will be skipped",
            record.task_id
        );
    }
    Ok(Problem {
        id: record.task_id,
        suite: Suite::Humaneval,
        difficulty: Difficulty::None,
        description: format!("{}\nUse Call-Based format", record.prompt),
        example_tests,
        hidden_tests: vec![TestCase::new(record.test, "").with_label(SCRIPT_LABEL)],
        ground_truths: vec![format!("{}{}", record.prompt, record.canonical_solution)],
        io_mode: IoMode::FunctionCall,
        entry_point: Some(entry_point),
    })
}

/// Extracts example calls from a prompt's docstring.
///
/// Doctest blocks (`>>> expr` followed by the expected value) are used when
/// present; otherwise lines of the form `entry(args) == value`,
/// `entry(args) ➞ value` or `entry(args) => value`.
pub fn parse_docstring_examples(prompt: &str, entry_point: &str) -> Vec<TestCase> {
    let doctests = parse_doctests(prompt);
    if !doctests.is_empty() {
        return doctests;
    }
    prompt
        .lines()
        .filter_map(|line| parse_arrow_example(line.trim(), entry_point))
        .collect()
}

fn is_docstring_end(line: &str) -> bool {
    line.starts_with("\"\"\"") || line.starts_with("'''")
}

fn strip_docstring_close(line: &str) -> &str {
    line.trim_end()
        .strip_suffix("\"\"\"")
        .or_else(|| line.trim_end().strip_suffix("'''"))
        .unwrap_or(line)
        .trim_end()
}

fn parse_doctests(prompt: &str) -> Vec<TestCase> {
    let lines: Vec<&str> = prompt.lines().collect();
    let mut tests = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let trimmed = lines[i].trim();
        let Some(expr) = trimmed.strip_prefix(">>>") else {
            i += 1;
            continue;
        };
        let mut input = strip_docstring_close(expr.trim()).to_string();
        i += 1;
        while i < lines.len() {
            let t = lines[i].trim();
            match t.strip_prefix("...") {
                Some(rest) if t.starts_with("... ") || t == "..." => {
                    input.push('\n');
                    input.push_str(rest.trim_start());
                    i += 1;
                }
                _ => break,
            }
        }
        let mut expected: Vec<&str> = Vec::new();
        while i < lines.len() {
            let t = lines[i].trim();
            if t.is_empty() || t.starts_with(">>>") || is_docstring_end(t) {
                break;
            }
            let closed = strip_docstring_close(t);
            expected.push(closed);
            i += 1;
            if closed.len() != t.len() {
                break;
            }
        }
        let expected = if expected.is_empty() {
            // doctest prints nothing for None
            "None".to_string()
        } else {
            expected.join("\n")
        };
        if !input.is_empty() {
            tests.push(TestCase::new(input, expected));
        }
    }
    tests
}

fn parse_arrow_example(line: &str, entry_point: &str) -> Option<TestCase> {
    let rest = line.strip_prefix(entry_point)?;
    if !rest.starts_with('(') {
        return None;
    }
    let close = matching_paren(rest)?;
    let call = &line[..entry_point.len() + close + 1];
    let tail = rest[close + 1..].trim_start();
    let value = ["==", "➞", "=>"].iter().find_map(|sep| tail.strip_prefix(sep))?.trim();
    let value = value.trim_end_matches([',', ';']).trim();
    if value.is_empty() {
        return None;
    }
    Some(TestCase::new(call, value))
}

/// Byte index of the parenthesis closing the one at index 0.
fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return (c == ')').then_some(i);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doctest_single_example() {
        let prompt = "def f(x):\n    \"\"\" Add one.\n    >>> f(1) \n    2\n    \"\"\"\n";
        assert_eq!(parse_docstring_examples(prompt, "f"), vec![TestCase::new("f(1)", "2")]);
    }

    #[test]
    fn doctest_empty_output_means_none() {
        let prompt =
            "def longest(s):\n    \"\"\"\n    >>> longest([])\n\n    >>> longest(['a', 'b'])\n    'a'\n    \"\"\"\n";
        assert_eq!(
            parse_docstring_examples(prompt, "longest"),
            vec![
                TestCase::new("longest([])", "None"),
                TestCase::new("longest(['a', 'b'])", "'a'"),
            ]
        );
    }

    #[test]
    fn doctest_closing_quotes_on_value_line() {
        let prompt = "def g():\n    \"\"\"\n    >>> g()\n    3\"\"\"\n";
        assert_eq!(parse_docstring_examples(prompt, "g"), vec![TestCase::new("g()", "3")]);
    }

    #[test]
    fn arrow_examples() {
        let prompt = "def will_it_fly(q, w):\n    '''\n    Example:\n    will_it_fly([1, 2], 5) ➞ False\n    will_it_fly([3, 2, 3], 9) ➞ True\n    search(\"a(\") == 1\n    '''\n";
        assert_eq!(
            parse_docstring_examples(prompt, "will_it_fly"),
            vec![
                TestCase::new("will_it_fly([1, 2], 5)", "False"),
                TestCase::new("will_it_fly([3, 2, 3], 9)", "True"),
            ]
        );
        let prompt =
            "def digitSum(s):\n    \"\"\"\n        digitSum(\"a)b\") => 131\n        digitSum(\"\") == 0,\n    \"\"\"";
        assert_eq!(
            parse_docstring_examples(prompt, "digitSum"),
            vec![
                TestCase::new("digitSum(\"a)b\")", "131"),
                TestCase::new("digitSum(\"\")", "0")
            ]
        );
    }

    #[test]
    fn no_examples() {
        assert!(parse_docstring_examples("def f():\n    \"\"\"Nothing.\"\"\"\n", "f").is_empty());
    }

    #[test]
    fn missing_entry_point_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("he.jsonl");
        std::fs::write(
            &path,
            r#"{"task_id":"T/0","prompt":"def f():\n","canonical_solution":"  pass\n","test":"def check(c):\n  assert True\n"}"#,
        )
        .unwrap();
        let err = ingest_humaneval(&path).unwrap_err();
        assert!(err.to_string().contains("entry point"), "{err}");
    }
}
