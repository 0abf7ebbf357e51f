use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use super::{Difficulty, IoMode, Problem, Suite, TestCase, EXAMPLE_LABEL, INFERRED_EXAMPLE_LABEL, JSON_ARGS_LABEL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppsSplit {
    Train,
    Dev,
    Test,
}

impl AppsSplit {
    fn dir_name(self) -> &'static str {
        match self {
            AppsSplit::Train | AppsSplit::Dev => "train",
            AppsSplit::Test => "test",
        }
    }

    fn suite(self) -> Suite {
        match self {
            AppsSplit::Train => Suite::AppsTrain,
            AppsSplit::Dev => Suite::AppsDev,
            AppsSplit::Test => Suite::AppsTest,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AppsIngestOptions {
    /// Folder names of the dev split. Required for [`AppsSplit::Dev`];
    /// excluded from [`AppsSplit::Train`] when given.
    pub dev_ids: Option<HashSet<String>>,
    /// Skip (and log) folders without hidden tests instead of failing.
    pub skip_invalid: bool,
}

#[derive(Deserialize)]
struct InputOutput {
    #[serde(default)]
    inputs: Vec<Value>,
    #[serde(default)]
    outputs: Vec<Value>,
    #[serde(default)]
    fn_name: Option<String>,
}

#[derive(Deserialize)]
struct Metadata {
    #[serde(default)]
    difficulty: Option<String>,
}

/// Reads a split-id file: one folder name per line, `#` comments allowed.
pub fn load_split_ids(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(normalize_folder_id)
        .collect())
}

fn normalize_folder_id(id: &str) -> String {
    let id = id.trim();
    match id.parse::<u64>() {
        Ok(n) => n.to_string(),
        Err(_) => id.to_string(),
    }
}

/// Ingests an APPS checkout (`<root>/train/0000/question.txt`, ...).
///
/// `root` may point at the checkout or directly at a split directory.
pub fn ingest_apps(root: &Path, split: AppsSplit, options: &AppsIngestOptions) -> Result<Vec<Problem>> {
    let split_dir = {
        let candidate = root.join(split.dir_name());
        if candidate.is_dir() {
            candidate
        } else {
            root.to_path_buf()
        }
    };
    if split == AppsSplit::Dev && options.dev_ids.is_none() {
        return Err(Error::Ingest {
            path: split_dir,
            message: "the dev split needs a split-id file".into(),
        });
    }

    let mut folders: Vec<PathBuf> = fs::read_dir(&split_dir)
        .map_err(|e| Error::io(&split_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    folders.sort();

    if folders.is_empty() {
        log::warn!("no problem folders under {}", split_dir.display());
        return Ok(Vec::new());
    }

    let dir_name = split.dir_name();
    let mut problems = Vec::new();
    let mut skipped = 0usize;
    for folder in folders {
        let name = folder
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some(dev) = &options.dev_ids {
            let in_dev = dev.contains(&normalize_folder_id(&name));
            match split {
                AppsSplit::Dev if !in_dev => continue,
                AppsSplit::Train if in_dev => continue,
                _ => {}
            }
        }
        match read_problem(&folder, &format!("{dir_name}/{name}"), split.suite()) {
            Ok(p) => problems.push(p),
            Err(err @ Error::Ingest { .. }) if options.skip_invalid => {
                log::warn!("skipping: {err}");
                skipped += 1;
            }
            Err(err) => return Err(err),
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} invalid problem folders");
    }
    Ok(problems)
}

fn read_problem(folder: &Path, id: &str, suite: Suite) -> Result<Problem> {
    let ingest_err = |path: &Path, message: String| Error::Ingest {
        path: path.to_path_buf(),
        message,
    };

    let question_path = folder.join("question.txt");
    let question = match fs::read_to_string(&question_path) {
        Ok(q) if !q.trim().is_empty() => q,
        Ok(_) => return Err(ingest_err(folder, "empty description".into())),
        Err(_) => return Err(ingest_err(folder, "missing description (question.txt)".into())),
    };

    let io_path = folder.join("input_output.json");
    let io_text = fs::read_to_string(&io_path)
        .map_err(|_| ingest_err(folder, "missing hidden tests (input_output.json)".into()))?;
    let io: InputOutput = serde_json::from_str(&io_text)
        .map_err(|e| ingest_err(&io_path, format!("malformed input_output.json: {e}")))?;
    if io.inputs.len() != io.outputs.len() {
        return Err(ingest_err(
            &io_path,
            format!("{} inputs but {} outputs", io.inputs.len(), io.outputs.len()),
        ));
    }
    if io.inputs.is_empty() {
        return Err(ingest_err(folder, "missing hidden tests (no I/O pairs)".into()));
    }

    let difficulty = read_difficulty(folder)?;

    let solutions_path = folder.join("solutions.json");
    let ground_truths: Vec<String> = match fs::read_to_string(&solutions_path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| ingest_err(&solutions_path, format!("malformed solutions.json: {e}")))?,
        Err(_) => Vec::new(),
    };

    let starter = fs::read_to_string(folder.join("starter_code.py")).unwrap_or_default();
    let call_based = io.fn_name.is_some();

    let hidden_tests: Vec<TestCase> = io
        .inputs
        .iter()
        .zip(&io.outputs)
        .map(|(input, output)| {
            if call_based {
                TestCase::new(input.to_string(), output.to_string()).with_label(JSON_ARGS_LABEL)
            } else {
                TestCase::new(stdio_text(input), stdio_text(output))
            }
        })
        .collect();

    let mut example_tests: Vec<TestCase> = hidden_tests
        .iter()
        .filter(|t| appears_in(&question, &t.input))
        .map(|t| TestCase {
            input: t.input.clone(),
            expected: t.expected.clone(),
            label: Some(if call_based { JSON_ARGS_LABEL } else { EXAMPLE_LABEL }.to_string()),
        })
        .collect();
    if example_tests.is_empty() {
        let first = &hidden_tests[0];
        example_tests.push(TestCase {
            input: first.input.clone(),
            expected: first.expected.clone(),
            label: Some(
                if call_based {
                    JSON_ARGS_LABEL
                } else {
                    INFERRED_EXAMPLE_LABEL
                }
                .to_string(),
            ),
        });
    }

    let mut description = question;
    if !starter.trim().is_empty() {
        if !description.ends_with('\n') {
            description.push('\n');
        }
        description.push_str(&starter);
    }
    description.push_str(if call_based {
        "\nUse Call-Based format"
    } else {
        "\nUse Standard Input format"
    });

    Ok(Problem {
        id: id.to_string(),
        suite,
        difficulty,
        description,
        example_tests,
        hidden_tests,
        ground_truths,
        io_mode: if call_based {
            IoMode::FunctionCall
        } else {
            IoMode::Stdio
        },
        entry_point: io.fn_name,
    })
}

fn read_difficulty(folder: &Path) -> Result<Difficulty> {
    let path = folder.join("metadata.json");
    let Ok(text) = fs::read_to_string(&path) else {
        log::warn!("{}: no metadata.json, difficulty set to none", folder.display());
        return Ok(Difficulty::None);
    };
    let meta: Metadata = serde_json::from_str(&text).map_err(|e| Error::Ingest {
        path: path.clone(),
        message: format!("malformed metadata.json: {e}"),
    })?;
    match meta.difficulty.as_deref().map(str::trim) {
        Some("introductory") => Ok(Difficulty::Introductory),
        Some("interview") => Ok(Difficulty::Interview),
        Some("competition") => Ok(Difficulty::Competition),
        None => Ok(Difficulty::None),
        Some(other) => Err(Error::Ingest {
            path,
            message: format!("unknown difficulty {other:?}"),
        }),
    }
}

fn stdio_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) if items.iter().all(Value::is_string) => items
            .iter()
            .map(|i| i.as_str().unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\n"),
        other => other.to_string(),
    }
}

/// True when the test input occurs in the description as a block of whole
/// lines (trailing whitespace ignored).
fn appears_in(description: &str, input: &str) -> bool {
    let needle: Vec<&str> = input.trim_end().lines().map(str::trim_end).collect();
    if needle.is_empty() || needle.iter().all(|l| l.is_empty()) {
        return false;
    }
    let hay: Vec<&str> = description.lines().map(str::trim_end).collect();
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}
