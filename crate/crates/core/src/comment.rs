//! Supplementary comments: the execution result of a candidate on its
//! example test, rendered as text for the editor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::{exception_name, ErrorCategory, ExecutionOutcome, OutcomeKind};
use crate::store::TestCase;

const PASS: &str = include_str!("../templates/pass.txt");
const WRONG_ANSWER: &str = include_str!("../templates/wrong_answer.txt");
const ERROR_LINE: &str = include_str!("../templates/error_line.txt");
const ERROR: &str = include_str!("../templates/error.txt");
const TIMEOUT: &str = include_str!("../templates/timeout.txt");

pub const DEFAULT_FIELD_CAP: usize = 1000;
pub const ELLIPSIS: &str = "...";

pub const PASS_CLASS: &str = "pass";
pub const WRONG_ANSWER_CLASS: &str = "wrong_answer";
pub const TIMEOUT_CLASS: &str = "error:timeout";
pub const UNKNOWN_ERROR_CLASS: &str = "error:Unknown";

#[derive(Error, Debug)]
pub enum CommentError {
    #[error("outcome {label} violates its invariants: {message}")]
    Contract { label: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplementaryComment {
    pub comment_class: String,
    pub text: String,
}

/// One line of a comments JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub candidate_id: String,
    pub comment_class: String,
    pub text: String,
}

impl CommentRecord {
    pub fn new(candidate_id: impl Into<String>, comment: SupplementaryComment) -> Self {
        CommentRecord {
            candidate_id: candidate_id.into(),
            comment_class: comment.comment_class,
            text: comment.text,
        }
    }
}

fn template(raw: &str) -> &str {
    raw.strip_suffix('\n').unwrap_or(raw)
}

/// The exact text of a passing comment.
pub fn pass_text() -> &'static str {
    template(PASS)
}

/// Keeps at most `cap` characters, replacing the middle with `...`.
pub fn truncate_middle(text: &str, cap: usize) -> String {
    let len = text.chars().count();
    if len <= cap {
        return text.to_string();
    }
    if cap <= ELLIPSIS.len() {
        return ELLIPSIS.chars().take(cap).collect();
    }
    let room = cap - ELLIPSIS.len();
    let head = room.div_ceil(2);
    let tail = room / 2;
    let mut out: String = text.chars().take(head).collect();
    out.push_str(ELLIPSIS);
    out.extend(text.chars().skip(len - tail));
    out
}

fn field(text: &str, cap: usize) -> String {
    truncate_middle(text.trim_end_matches(['\n', '\r']), cap)
}

/// Single-pass `{name}` substitution; substituted text is never rescanned.
pub(crate) fn render(template: &str, values: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        for (name, value) in values {
            if let Some(tail) = after.strip_prefix(name).and_then(|t| t.strip_prefix('}')) {
                out.push_str(value);
                rest = tail;
                continue 'scan;
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

pub fn comment_class_of(outcome: &ExecutionOutcome) -> String {
    match outcome.kind {
        OutcomeKind::Passed => PASS_CLASS.to_string(),
        OutcomeKind::WrongAnswer => WRONG_ANSWER_CLASS.to_string(),
        OutcomeKind::Error => {
            if outcome.error_category == Some(ErrorCategory::Timeout) {
                return TIMEOUT_CLASS.to_string();
            }
            match outcome.error_message.as_deref().and_then(exception_name) {
                Some(name) => format!("error:{name}"),
                None => UNKNOWN_ERROR_CLASS.to_string(),
            }
        }
    }
}

pub fn build_comment(outcome: &ExecutionOutcome, test: &TestCase) -> Result<SupplementaryComment, CommentError> {
    build_comment_with_cap(outcome, test, DEFAULT_FIELD_CAP)
}

pub fn build_comment_with_cap(
    outcome: &ExecutionOutcome,
    test: &TestCase,
    cap: usize,
) -> Result<SupplementaryComment, CommentError> {
    outcome.check_invariants().map_err(|message| CommentError::Contract {
        label: outcome.test_label.clone(),
        message,
    })?;
    let text = match outcome.kind {
        OutcomeKind::Passed => pass_text().to_string(),
        OutcomeKind::WrongAnswer => render(
            template(WRONG_ANSWER),
            &[
                ("input", field(&test.input, cap)),
                ("expected", field(&test.expected, cap)),
                (
                    "actual",
                    field(outcome.actual_output.as_deref().unwrap_or_default(), cap),
                ),
            ],
        ),
        OutcomeKind::Error => {
            let message = field(outcome.error_message.as_deref().unwrap_or_default(), cap);
            match (outcome.error_category, outcome.error_line) {
                (Some(ErrorCategory::Timeout), _) => render(template(TIMEOUT), &[("full_error_message", message)]),
                (_, Some(line)) => render(
                    template(ERROR_LINE),
                    &[
                        ("line", line.to_string()),
                        (
                            "line_content",
                            field(outcome.error_line_content.as_deref().unwrap_or_default(), cap),
                        ),
                        ("full_error_message", message),
                    ],
                ),
                (_, None) => render(template(ERROR), &[("full_error_message", message)]),
            }
        }
    };
    Ok(SupplementaryComment {
        comment_class: comment_class_of(outcome),
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(kind: OutcomeKind) -> ExecutionOutcome {
        ExecutionOutcome {
            test_label: "example-0".into(),
            kind,
            error_category: None,
            actual_output: None,
            error_message: None,
            error_line: None,
            error_line_content: None,
            wall_time_ms: 0,
        }
    }

    fn error(category: ErrorCategory, message: &str, line: Option<(u32, &str)>) -> ExecutionOutcome {
        ExecutionOutcome {
            error_category: Some(category),
            error_message: Some(message.into()),
            error_line: line.map(|l| l.0),
            error_line_content: line.map(|l| l.1.to_string()),
            ..outcome(OutcomeKind::Error)
        }
    }

    #[test]
    fn pass_comment_is_exact() {
        let c = build_comment(
            &ExecutionOutcome {
                actual_output: Some("2\n".into()),
                ..outcome(OutcomeKind::Passed)
            },
            &TestCase::new("1", "2"),
        )
        .unwrap();
        assert_eq!(c.text, "Pass the example test case.");
        assert_eq!(c.comment_class, "pass");
    }

    #[test]
    fn wrong_answer_comment() {
        let o = ExecutionOutcome {
            actual_output: Some("4\n".into()),
            ..outcome(OutcomeKind::WrongAnswer)
        };
        let c = build_comment(&o, &TestCase::new("1 2", "3")).unwrap();
        assert_eq!(
            c.text,
            "Wrong answer on the example test case.\nInput:\n1 2\nExpected output:\n3\nActual output:\n4\nRewrite the code."
        );
        assert!(c.text.ends_with("Rewrite the code."));
        assert_eq!(c.comment_class, "wrong_answer");
    }

    #[test]
    fn error_comment_with_line() {
        let msg = "Traceback (most recent call last):\n  File \"solution.py\", line 3, in <module>\n    print(a)\nNameError: name 'a' is not defined";
        let c = build_comment(
            &error(ErrorCategory::Runtime, msg, Some((3, "print(a)"))),
            &TestCase::new("", ""),
        )
        .unwrap();
        assert_eq!(c.text, format!("The code raises an error at line 3: print(a)\n{msg}"));
        assert_eq!(c.comment_class, "error:NameError");
    }

    #[test]
    fn error_comment_without_line_and_timeout() {
        let c = build_comment(
            &error(ErrorCategory::Runtime, "RecursionError: deep", None),
            &TestCase::new("", ""),
        )
        .unwrap();
        assert_eq!(c.text, "The code raises an error.\nRecursionError: deep");
        let c = build_comment(
            &error(ErrorCategory::Timeout, "time limit exceeded", None),
            &TestCase::new("", ""),
        )
        .unwrap();
        assert_eq!(c.text, "The code exceeds the time limit.\ntime limit exceeded");
        assert_eq!(c.comment_class, "error:timeout");
    }

    #[test]
    fn unknown_class() {
        let o = error(ErrorCategory::Runtime, "process exited with status 3", None);
        assert_eq!(comment_class_of(&o), "error:Unknown");
        let o = error(ErrorCategory::Runtime, "a\nZeroDivisionError: division by zero\n", None);
        assert_eq!(comment_class_of(&o), "error:ZeroDivisionError");
    }

    #[test]
    fn inconsistent_outcome_is_rejected() {
        let o = outcome(OutcomeKind::Error);
        assert!(build_comment(&o, &TestCase::new("", "")).is_err());
    }

    #[test]
    fn placeholders_in_values_are_not_expanded() {
        let o = ExecutionOutcome {
            actual_output: Some("{expected}".into()),
            ..outcome(OutcomeKind::WrongAnswer)
        };
        let c = build_comment(&o, &TestCase::new("{actual}", "x")).unwrap();
        assert!(c.text.contains("Input:\n{actual}\n"));
        assert!(c.text.contains("Actual output:\n{expected}\n"));
    }

    #[test]
    fn middle_truncation() {
        assert_eq!(truncate_middle("abcdefghij", 7), "ab...ij");
        assert_eq!(truncate_middle("abcdefghij", 8), "abc...ij");
        assert_eq!(truncate_middle("abc", 7), "abc");
        let long = "x".repeat(5000);
        let o = ExecutionOutcome {
            actual_output: Some(long),
            ..outcome(OutcomeKind::WrongAnswer)
        };
        let c = build_comment(&o, &TestCase::new("1", "2")).unwrap();
        let actual = c
            .text
            .split("Actual output:\n")
            .nth(1)
            .unwrap()
            .strip_suffix("\nRewrite the code.")
            .unwrap();
        assert_eq!(actual.chars().count(), DEFAULT_FIELD_CAP);
        assert!(actual.contains("..."));
    }

    proptest! {
        #[test]
        fn truncation_respects_cap(s in "\\PC{0,60}", cap in 0usize..40) {
            let t = truncate_middle(&s, cap);
            prop_assert!(t.chars().count() <= cap);
            if s.chars().count() <= cap {
                prop_assert_eq!(t, s);
            }
        }

        #[test]
        fn every_legal_outcome_renders(kind in 0u8..4, msg in "[A-Za-z:. ]{0,30}", line in proptest::option::of(1u32..50), actual in "\\PC{0,20}") {
            let o = match kind {
                0 => ExecutionOutcome { actual_output: Some(actual), ..outcome(OutcomeKind::Passed) },
                1 => ExecutionOutcome { actual_output: Some(actual), ..outcome(OutcomeKind::WrongAnswer) },
                2 => error(ErrorCategory::Runtime, &msg, line.map(|l| (l, "x = 1"))),
                _ => error(ErrorCategory::Timeout, &msg, None),
            };
            let c = build_comment(&o, &TestCase::new("in", "out")).unwrap();
            prop_assert!(!c.text.is_empty());
            for p in ["{input}", "{expected}", "{line}", "{line_content}", "{full_error_message}"] {
                prop_assert!(!c.text.contains(p));
            }
            prop_assert_eq!(c.comment_class == "pass", c.text == pass_text());
        }
    }
}
