//! Fault classification from interpreter diagnostics.

use std::sync::OnceLock;

use regex::Regex;

use super::ErrorCategory;

/// Which step of an execution produced the diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// The compile-only pre-pass.
    Compile,
    /// Running the program on a test.
    Run,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorClassification {
    pub category: ErrorCategory,
    pub message: String,
    pub error_line: Option<u32>,
    pub error_line_content: Option<String>,
}

pub const TIMEOUT_MESSAGE: &str = "time limit exceeded";

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Frame {
    pub file: String,
    pub line: u32,
    /// Source line echoed under the frame header, if any.
    pub code: Option<String>,
}

fn frame_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^\s*File "([^"]+)", line (\d+)"#).unwrap())
}

fn exception_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)(?::|$)").unwrap())
}

/// Frames of the last traceback in `diagnostic`, outermost first.
pub(crate) fn frames(diagnostic: &str) -> Vec<Frame> {
    let tail = match diagnostic.rfind("Traceback (most recent call last):") {
        Some(pos) => &diagnostic[pos..],
        None => diagnostic,
    };
    let lines: Vec<&str> = tail.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let Some(caps) = frame_re().captures(line) else {
            continue;
        };
        let Ok(lineno) = caps[2].parse::<u32>() else {
            continue;
        };
        let code = lines
            .get(i + 1)
            .filter(|next| next.starts_with("    ") && !frame_re().is_match(next) && !next.trim().is_empty())
            .map(|next| next.trim().to_string());
        out.push(Frame {
            file: caps[1].to_string(),
            line: lineno,
            code,
        });
    }
    out
}

/// Exception class named on the last non-empty line, e.g. `ZeroDivisionError`
/// for `ZeroDivisionError: division by zero`. Dotted names yield their last
/// component.
pub fn exception_name(diagnostic: &str) -> Option<String> {
    let last = diagnostic.lines().rev().find(|l| !l.trim().is_empty())?;
    let caps = exception_re().captures(last.trim_end())?;
    let name = caps[1].rsplit('.').next()?.to_string();
    Some(name)
}

/// Classifies an abnormal termination.
///
/// Timeouts dominate; a failed compile pre-pass is a syntax error; anything
/// else is a runtime error. The error line is taken from the deepest frame
/// of the last traceback whose file is `candidate_path`.
pub fn classify_error(
    raw_diagnostic: &str,
    exit_code: Option<i32>,
    timed_out: bool,
    phase: Phase,
    candidate_path: &str,
    source: &str,
) -> ErrorClassification {
    if timed_out {
        return ErrorClassification {
            category: ErrorCategory::Timeout,
            message: TIMEOUT_MESSAGE.to_string(),
            error_line: None,
            error_line_content: None,
        };
    }
    let category = match phase {
        Phase::Compile => ErrorCategory::Syntax,
        Phase::Run => ErrorCategory::Runtime,
    };
    let trimmed = raw_diagnostic.trim_end();
    let message = if trimmed.trim().is_empty() {
        match exit_code {
            Some(code) => format!("process exited with status {code}"),
            None => "process terminated by a signal".to_string(),
        }
    } else {
        trimmed.to_string()
    };

    let source_lines: Vec<&str> = source.split('\n').collect();
    let attributed = frames(raw_diagnostic)
        .into_iter()
        .rev()
        .find(|f| f.file == candidate_path)
        .filter(|f| f.line >= 1 && (f.line as usize) <= source_lines.len());
    let (error_line, error_line_content) = match attributed {
        Some(f) => {
            let content = source_lines[f.line as usize - 1];
            let content = content.strip_suffix('\r').unwrap_or(content);
            (Some(f.line), Some(content.to_string()))
        }
        None => (None, None),
    };
    ErrorClassification {
        category,
        message,
        error_line,
        error_line_content,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAND: &str = "/tmp/x/solution.py";

    #[test]
    fn timeout_dominates() {
        let c = classify_error(
            "Traceback ...\nKeyboardInterrupt",
            Some(1),
            true,
            Phase::Compile,
            CAND,
            "x",
        );
        assert_eq!(
            c,
            ErrorClassification {
                category: ErrorCategory::Timeout,
                message: "time limit exceeded".into(),
                error_line: None,
                error_line_content: None
            }
        );
    }

    #[test]
    fn deepest_candidate_frame_wins() {
        let diag = "Traceback (most recent call last):\n  File \"/tmp/x/solution.py\", line 9, in <module>\n    g()\n  File \"/tmp/x/solution.py\", line 7, in g\n    return 1/0\nZeroDivisionError: division by zero\n";
        let source = "1\n2\n3\n4\n5\n6\n    return 1/0\n8\ng()\n";
        let c = classify_error(diag, Some(1), false, Phase::Run, CAND, source);
        assert_eq!(c.category, ErrorCategory::Runtime);
        assert_eq!(c.error_line, Some(7));
        assert_eq!(c.error_line_content.as_deref(), Some("    return 1/0"));
        assert_eq!(c.message, diag.trim_end());
    }

    #[test]
    fn internals_only_have_no_line() {
        let diag = "Traceback (most recent call last):\n  File \"<string>\", line 1, in <module>\n  File \"/usr/lib/python3.10/json/encoder.py\", line 199, in encode\n    chunks = self.iterencode(o, _one_shot=True)\nRecursionError: maximum recursion depth exceeded while encoding a JSON object\n";
        let c = classify_error(diag, Some(1), false, Phase::Run, CAND, "x = 1\n");
        assert_eq!((c.error_line, c.error_line_content), (None, None));
    }

    #[test]
    fn chained_tracebacks_use_the_last_block() {
        let diag = "Traceback (most recent call last):\n  File \"/tmp/x/solution.py\", line 2, in <module>\n    a = {}[1]\nKeyError: 1\n\nDuring handling of the above exception, another exception occurred:\n\nTraceback (most recent call last):\n  File \"/tmp/x/solution.py\", line 4, in <module>\n    b = 1/0\nZeroDivisionError: division by zero\n";
        let c = classify_error(
            diag,
            Some(1),
            false,
            Phase::Run,
            CAND,
            "try:\n    a = {}[1]\nexcept KeyError:\n    b = 1/0\n",
        );
        assert_eq!(c.error_line, Some(4));
        assert_eq!(exception_name(diag).as_deref(), Some("ZeroDivisionError"));
    }

    #[test]
    fn unparsable_diagnostics_do_not_crash() {
        let c = classify_error("\u{0}garbage \"File\" line ???", Some(3), false, Phase::Run, CAND, "");
        assert_eq!(c.category, ErrorCategory::Runtime);
        assert_eq!(c.message, "\u{0}garbage \"File\" line ???");
        assert_eq!(c.error_line, None);
        let c = classify_error("", Some(3), false, Phase::Run, CAND, "");
        assert_eq!(c.message, "process exited with status 3");
    }

    #[test]
    fn out_of_range_lines_are_dropped() {
        let diag = "  File \"/tmp/x/solution.py\", line 40\nSyntaxError: bad\n";
        let c = classify_error(diag, Some(1), false, Phase::Compile, CAND, "x\n");
        assert_eq!(c.category, ErrorCategory::Syntax);
        assert_eq!(c.error_line, None);
    }

    #[test]
    fn exception_names() {
        assert_eq!(
            exception_name("SyntaxError: '[' was never closed").as_deref(),
            Some("SyntaxError")
        );
        assert_eq!(
            exception_name("x\njson.decoder.JSONDecodeError: Expecting value\n\n").as_deref(),
            Some("JSONDecodeError")
        );
        assert_eq!(
            exception_name("KeyboardInterrupt").as_deref(),
            Some("KeyboardInterrupt")
        );
        assert_eq!(exception_name("process exited with status 1"), None);
        assert_eq!(exception_name(""), None);
    }
}
