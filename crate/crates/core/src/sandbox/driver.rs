//! Wrapper sources for function-call problems.
//!
//! The candidate always lives in `solution.py`; the driver imports it, so
//! every traceback frame inside the candidate is attributable by path.

use crate::store::{TestCase, JSON_ARGS_LABEL};

pub(crate) const SOLUTION_FILE: &str = "solution.py";
pub(crate) const DRIVER_FILE: &str = "driver.py";

fn py_str(s: &str) -> String {
    // JSON string literals are valid Python string literals
    serde_json::to_string(s).expect("strings serialize")
}

/// Driver that calls the entry point on one test and prints either the
/// expected text (values equal) or `repr` of the actual result.
pub(crate) fn call_driver(entry_point: &str, test: &TestCase) -> String {
    let mode = if test.label.as_deref() == Some(JSON_ARGS_LABEL) {
        "json-args"
    } else {
        "expr"
    };
    format!(
        r#"import contextlib as _se_contextlib
import io as _se_io
import json as _se_json
import re as _se_re

_SE_NAME = {name}
_SE_MODE = {mode}
_SE_INPUT = {input}
_SE_EXPECTED = {expected}
_se_missing = object()


def _se_equal(result, expected):
    if expected is _se_missing:
        return False
    try:
        if result == expected:
            return True
        if _SE_MODE == "json-args":
            if [result] == expected:
                return True
            if isinstance(result, tuple) and list(result) == expected:
                return True
    except Exception:
        pass
    return False


with _se_contextlib.redirect_stdout(_se_io.StringIO()):
    import solution as _se_mod

    _se_ns = dict(vars(_se_mod))
    _se_fn = _se_ns.get(_SE_NAME)
    if _se_fn is None and isinstance(_se_ns.get("Solution"), type):
        _se_fn = getattr(_se_ns["Solution"](), _SE_NAME, None)
    if _se_fn is None:
        raise NameError("name %r is not defined" % _SE_NAME)
    _se_ns[_SE_NAME] = _se_fn
    if _SE_MODE == "json-args":
        _se_result = _se_fn(*_se_json.loads(_SE_INPUT))
        try:
            _se_expected = _se_json.loads(_SE_EXPECTED)
        except ValueError:
            _se_expected = _se_missing
    else:
        if _se_re.search(r"\b%s\b" % _se_re.escape(_SE_NAME), _SE_INPUT):
            _se_result = eval(_SE_INPUT, _se_ns)
        else:
            _se_args = eval(_SE_INPUT, _se_ns)
            _se_result = _se_fn(*_se_args) if isinstance(_se_args, tuple) else _se_fn(_se_args)
        try:
            _se_expected = eval(_SE_EXPECTED, _se_ns)
        except Exception:
            _se_expected = _se_missing
    _se_ok = _se_equal(_se_result, _se_expected)

print(_SE_EXPECTED if _se_ok else repr(_se_result))
"#,
        name = py_str(entry_point),
        mode = py_str(mode),
        input = py_str(&test.input),
        expected = py_str(&test.expected),
    )
}

/// Driver that runs a whole test program (`check(candidate)` style) against
/// the candidate.
pub(crate) fn script_driver(entry_point: &str, test: &TestCase) -> String {
    format!(
        "from solution import *\n\n{test}\n\ncheck({entry_point})\n",
        test = test.input.trim_end(),
    )
}

/// Compile-only pre-pass: exits 1 with the formatted diagnostic on failure.
pub(crate) const COMPILE_CHECK: &str = r#"import sys, traceback
path = sys.argv[1]
try:
    with open(path, "rb") as fh:
        compile(fh.read(), path, "exec")
except (SyntaxError, ValueError) as exc:
    sys.stderr.write("".join(traceback.format_exception_only(type(exc), exc)))
    sys.exit(1)
"#;
