//! Runs candidate programs against test cases in an external interpreter and
//! classifies each run as passed, wrong answer or error.
//!
//! Every run gets a fresh temporary working directory. The candidate source
//! is written to `solution.py` there, so traceback frames can be matched to
//! the candidate by path. Before any test, a compile-only pass decides
//! whether the program is a syntax error.

mod classify;
mod compare;
mod driver;
mod process;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{IoMode, TestCase};

pub use classify::{classify_error, exception_name, ErrorClassification, Phase, TIMEOUT_MESSAGE};
pub use compare::{normalize_output, outputs_match};

use driver::{DRIVER_FILE, SOLUTION_FILE};

/// Message of the error outcome given to an empty candidate.
pub const EMPTY_PROGRAM_MESSAGE: &str = "EmptyProgramError: the candidate program is empty";

#[derive(Error, Debug)]
pub enum SandboxError {
    #[error("interpreter not found: {0}")]
    InterpreterNotFound(String),
    #[error("sandbox setup failed: {0}")]
    Setup(String),
    #[error("invalid sandbox config: {0}")]
    InvalidConfig(String),
    #[error("function-call execution needs an entry point")]
    MissingEntryPoint,
    #[error("no tests to run")]
    NoTests,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Passed,
    WrongAnswer,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Syntax,
    Runtime,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub test_label: String,
    pub kind: OutcomeKind,
    pub error_category: Option<ErrorCategory>,
    pub actual_output: Option<String>,
    pub error_message: Option<String>,
    pub error_line: Option<u32>,
    pub error_line_content: Option<String>,
    pub wall_time_ms: u64,
}

impl ExecutionOutcome {
    fn passed(label: &str, actual: String, wall_time_ms: u64) -> Self {
        ExecutionOutcome {
            test_label: label.to_string(),
            kind: OutcomeKind::Passed,
            error_category: None,
            actual_output: Some(actual),
            error_message: None,
            error_line: None,
            error_line_content: None,
            wall_time_ms,
        }
    }

    fn wrong_answer(label: &str, actual: String, wall_time_ms: u64) -> Self {
        ExecutionOutcome {
            kind: OutcomeKind::WrongAnswer,
            ..Self::passed(label, actual, wall_time_ms)
        }
    }

    fn error(label: &str, c: ErrorClassification, wall_time_ms: u64) -> Self {
        ExecutionOutcome {
            test_label: label.to_string(),
            kind: OutcomeKind::Error,
            error_category: Some(c.category),
            actual_output: None,
            error_message: Some(c.message),
            error_line: c.error_line,
            error_line_content: c.error_line_content,
            wall_time_ms,
        }
    }

    pub fn is_passed(&self) -> bool {
        self.kind == OutcomeKind::Passed
    }

    /// Checks the field-presence rules tying `kind` to the other fields.
    pub fn check_invariants(&self) -> Result<(), String> {
        let error_fields = self.error_category.is_some()
            || self.error_message.is_some()
            || self.error_line.is_some()
            || self.error_line_content.is_some();
        match self.kind {
            OutcomeKind::Passed | OutcomeKind::WrongAnswer => {
                if error_fields {
                    return Err(format!("{:?} outcome carries error fields", self.kind));
                }
                if self.kind == OutcomeKind::WrongAnswer && self.actual_output.is_none() {
                    return Err("wrong_answer outcome without actual_output".into());
                }
            }
            OutcomeKind::Error => {
                let Some(category) = self.error_category else {
                    return Err("error outcome without error_category".into());
                };
                if self.error_message.is_none() {
                    return Err("error outcome without error_message".into());
                }
                if self.actual_output.is_some() {
                    return Err("error outcome carries actual_output".into());
                }
                if category == ErrorCategory::Timeout && self.error_line.is_some() {
                    return Err("timeout outcome with an error line".into());
                }
            }
        }
        if self.error_line.is_some() != self.error_line_content.is_some() {
            return Err("error_line and error_line_content must come together".into());
        }
        if self.error_line == Some(0) {
            return Err("error_line is 1-based".into());
        }
        Ok(())
    }
}

/// One outcome line of an outcomes JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub candidate_id: String,
    #[serde(flatten)]
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkingDirPolicy {
    #[default]
    EphemeralTemp,
}

fn default_interpreter() -> Vec<String> {
    vec!["python3".to_string()]
}
fn default_time_limit_ms() -> u64 {
    4000
}
fn default_max_output_bytes() -> usize {
    1 << 20
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxConfig {
    #[serde(default = "default_interpreter")]
    pub interpreter_command: Vec<String>,
    #[serde(default = "default_time_limit_ms")]
    pub time_limit_ms: u64,
    #[serde(default)]
    pub memory_limit_mb: Option<u64>,
    #[serde(default)]
    pub working_dir_policy: WorkingDirPolicy,
    #[serde(default = "default_max_output_bytes")]
    pub max_output_bytes: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            interpreter_command: default_interpreter(),
            time_limit_ms: default_time_limit_ms(),
            memory_limit_mb: None,
            working_dir_policy: WorkingDirPolicy::EphemeralTemp,
            max_output_bytes: default_max_output_bytes(),
        }
    }
}

impl SandboxConfig {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.interpreter_command.is_empty() {
            return Err(SandboxError::InvalidConfig("empty interpreter_command".into()));
        }
        if self.time_limit_ms == 0 {
            return Err(SandboxError::InvalidConfig("time_limit_ms must be positive".into()));
        }
        if self.max_output_bytes == 0 {
            return Err(SandboxError::InvalidConfig("max_output_bytes must be positive".into()));
        }
        if self.memory_limit_mb == Some(0) {
            return Err(SandboxError::InvalidConfig("memory_limit_mb must be positive".into()));
        }
        Ok(())
    }

    fn time_limit(&self) -> Duration {
        Duration::from_millis(self.time_limit_ms)
    }
}

/// Positional label of the `index`-th test of a kind (`example`, `hidden`).
pub fn test_label(prefix: &str, index: usize) -> String {
    format!("{prefix}-{index}")
}

struct Workspace {
    dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Result<Self, SandboxError> {
        let dir = tempfile::Builder::new()
            .prefix("selfedit-")
            .tempdir()
            .map_err(|e| SandboxError::Setup(format!("temp dir: {e}")))?;
        let root = dir
            .path()
            .canonicalize()
            .map_err(|e| SandboxError::Setup(format!("temp dir: {e}")))?;
        Ok(Workspace { dir, root })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, SandboxError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| SandboxError::Setup(format!("write {name}: {e}")))?;
        Ok(path)
    }

    /// Strips the workspace prefix so diagnostics read `solution.py`.
    fn sanitize(&self, text: &str) -> String {
        let prefix = format!("{}/", self.root.display());
        text.replace(&prefix, "")
    }

    fn path(&self) -> &Path {
        let _ = &self.dir;
        &self.root
    }
}

fn spawn_error(err: std::io::Error, config: &SandboxConfig) -> SandboxError {
    if err.kind() == std::io::ErrorKind::NotFound {
        SandboxError::InterpreterNotFound(config.interpreter_command[0].clone())
    } else {
        SandboxError::Setup(format!("spawn: {err}"))
    }
}

/// A program that went through the compile pre-pass.
struct Prepared<'a> {
    program: &'a str,
    /// Set when the pre-pass failed; every test then reports this error.
    compile_failure: Option<(ErrorClassification, u64)>,
}

fn prepare<'a>(program: &'a str, config: &SandboxConfig) -> Result<Prepared<'a>, SandboxError> {
    config.validate()?;
    if program.trim().is_empty() {
        let failure = ErrorClassification {
            category: ErrorCategory::Syntax,
            message: EMPTY_PROGRAM_MESSAGE.to_string(),
            error_line: None,
            error_line_content: None,
        };
        return Ok(Prepared {
            program,
            compile_failure: Some((failure, 0)),
        });
    }
    let ws = Workspace::new()?;
    let path = ws.write(SOLUTION_FILE, program)?;
    let path_str = path.to_string_lossy().into_owned();
    let mut argv = config.interpreter_command.clone();
    argv.extend(["-c".to_string(), driver::COMPILE_CHECK.to_string(), path_str.clone()]);
    let run = process::run(&process::RunSpec {
        argv: &argv,
        cwd: ws.path(),
        stdin: b"",
        time_limit: config.time_limit(),
        max_output_bytes: config.max_output_bytes,
        memory_limit_mb: config.memory_limit_mb,
    })
    .map_err(|e| spawn_error(e, config))?;
    if run.success() {
        return Ok(Prepared {
            program,
            compile_failure: None,
        });
    }
    let stderr = String::from_utf8_lossy(&run.stderr);
    let mut c = classify_error(
        &stderr,
        run.exit_code(),
        run.timed_out,
        Phase::Compile,
        &path_str,
        program,
    );
    c.message = ws.sanitize(&c.message);
    Ok(Prepared {
        program,
        compile_failure: Some((c, run.elapsed.as_millis() as u64)),
    })
}

fn run_prepared(
    prepared: &Prepared<'_>,
    test: &TestCase,
    label: &str,
    io_mode: IoMode,
    entry_point: Option<&str>,
    config: &SandboxConfig,
) -> Result<ExecutionOutcome, SandboxError> {
    if let Some((failure, ms)) = &prepared.compile_failure {
        return Ok(ExecutionOutcome::error(label, failure.clone(), *ms));
    }
    let program = prepared.program;
    let ws = Workspace::new()?;
    let solution = ws.write(SOLUTION_FILE, program)?;
    let solution_str = solution.to_string_lossy().into_owned();

    let mut argv = config.interpreter_command.clone();
    let stdin: &[u8] = match io_mode {
        IoMode::Stdio => {
            argv.push(solution_str.clone());
            test.input.as_bytes()
        }
        IoMode::FunctionCall => {
            let entry = entry_point.ok_or(SandboxError::MissingEntryPoint)?;
            let source = if test.is_script() {
                driver::script_driver(entry, test)
            } else {
                driver::call_driver(entry, test)
            };
            let driver = ws.write(DRIVER_FILE, &source)?;
            argv.push(driver.to_string_lossy().into_owned());
            b""
        }
    };

    let run = process::run(&process::RunSpec {
        argv: &argv,
        cwd: ws.path(),
        stdin,
        time_limit: config.time_limit(),
        max_output_bytes: config.max_output_bytes,
        memory_limit_mb: config.memory_limit_mb,
    })
    .map_err(|e| spawn_error(e, config))?;
    let wall_time_ms = run.elapsed.as_millis() as u64;

    if run.success() {
        let mut actual = String::from_utf8_lossy(&run.stdout).into_owned();
        if test.is_script() {
            return Ok(ExecutionOutcome::passed(label, actual, wall_time_ms));
        }
        if run.stdout_truncated {
            actual.push_str("\n[output truncated]");
            return Ok(ExecutionOutcome::wrong_answer(label, actual, wall_time_ms));
        }
        return Ok(if outputs_match(&test.expected, &actual) {
            ExecutionOutcome::passed(label, actual, wall_time_ms)
        } else {
            ExecutionOutcome::wrong_answer(label, actual, wall_time_ms)
        });
    }

    let stderr = String::from_utf8_lossy(&run.stderr).into_owned();
    if !run.timed_out && test.is_script() {
        if let Some(actual) = failed_assertion(&stderr, &solution_str) {
            return Ok(ExecutionOutcome::wrong_answer(label, actual, wall_time_ms));
        }
    }
    let mut c = classify_error(
        &stderr,
        run.exit_code(),
        run.timed_out,
        Phase::Run,
        &solution_str,
        program,
    );
    if c.message.starts_with("process terminated") {
        if let Some(sig) = run.signal() {
            c.message = format!("process terminated by signal {sig}");
        }
    }
    c.message = ws.sanitize(&c.message);
    Ok(ExecutionOutcome::error(label, c, wall_time_ms))
}

/// An `AssertionError` raised by the test program itself (not inside the
/// candidate) is a wrong answer; returns the failing assertion text.
fn failed_assertion(stderr: &str, solution_path: &str) -> Option<String> {
    if exception_name(stderr).as_deref() != Some("AssertionError") {
        return None;
    }
    let last = classify::frames(stderr).pop()?;
    if last.file == solution_path {
        return None;
    }
    Some(last.code.unwrap_or_else(|| "AssertionError".to_string()))
}

/// Runs `program` on one test case.
pub fn execute(
    program: &str,
    test: &TestCase,
    io_mode: IoMode,
    entry_point: Option<&str>,
    config: &SandboxConfig,
) -> Result<ExecutionOutcome, SandboxError> {
    let label = test.label.clone().unwrap_or_else(|| "test".to_string());
    let prepared = prepare(program, config)?;
    run_prepared(&prepared, test, &label, io_mode, entry_point, config)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteResult {
    pub outcomes: Vec<ExecutionOutcome>,
    /// True iff every test passed.
    pub verdict: bool,
}

/// Runs `program` on every test, labelling outcomes `<prefix>-<index>`.
///
/// With `fail_fast` the run stops at the first non-passing test.
pub fn execute_suite(
    program: &str,
    tests: &[TestCase],
    label_prefix: &str,
    io_mode: IoMode,
    entry_point: Option<&str>,
    config: &SandboxConfig,
    fail_fast: bool,
) -> Result<SuiteResult, SandboxError> {
    if tests.is_empty() {
        return Err(SandboxError::NoTests);
    }
    let prepared = prepare(program, config)?;
    let mut outcomes = Vec::with_capacity(tests.len());
    for (i, test) in tests.iter().enumerate() {
        let outcome = run_prepared(
            &prepared,
            test,
            &test_label(label_prefix, i),
            io_mode,
            entry_point,
            config,
        )?;
        let passed = outcome.is_passed();
        outcomes.push(outcome);
        if fail_fast && !passed {
            break;
        }
    }
    let verdict = outcomes.len() == tests.len() && outcomes.iter().all(ExecutionOutcome::is_passed);
    Ok(SuiteResult { outcomes, verdict })
}

/// One candidate to run on a list of tests.
#[derive(Debug, Clone)]
pub struct ExecJob<'a> {
    pub candidate_id: &'a str,
    pub program: &'a str,
    pub tests: &'a [TestCase],
    pub label_prefix: &'a str,
    pub io_mode: IoMode,
    pub entry_point: Option<&'a str>,
}

/// Runs independent jobs on a bounded worker pool; results keep job order.
pub fn execute_jobs(
    jobs: &[ExecJob<'_>],
    config: &SandboxConfig,
    parallelism: usize,
    fail_fast: bool,
) -> Result<Vec<Vec<OutcomeRecord>>, SandboxError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| SandboxError::Setup(format!("worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let result = execute_suite(
                    job.program,
                    job.tests,
                    job.label_prefix,
                    job.io_mode,
                    job.entry_point,
                    config,
                    fail_fast,
                )?;
                Ok(result
                    .outcomes
                    .into_iter()
                    .map(|outcome| OutcomeRecord {
                        candidate_id: job.candidate_id.to_string(),
                        outcome,
                    })
                    .collect())
            })
            .collect()
    })
}
