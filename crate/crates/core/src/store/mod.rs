//! Benchmark problems in one normalized record format.
//!
//! APPS folders and the HumanEval archive are both ingested into
//! [`Problem`] records; every other stage reads the normalized JSONL corpus
//! and never looks at the original layouts.

mod apps;
mod humaneval;
mod stats;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub use apps::{ingest_apps, load_split_ids, AppsIngestOptions, AppsSplit};
pub use humaneval::{ingest_humaneval, parse_docstring_examples};
pub use stats::{corpus_stats, render_stats_table, CorpusStats, DifficultyCounts};

/// Label of a hidden test that is a whole test program rather than an
/// input/expected pair.
pub const SCRIPT_LABEL: &str = "script";
/// Label of an example test found verbatim in the problem description.
pub const EXAMPLE_LABEL: &str = "example";
/// Label of an example test that had to be inferred (first I/O pair).
pub const INFERRED_EXAMPLE_LABEL: &str = "inferred";
/// Label of a call-based test whose input is a JSON array of arguments and
/// whose expected value is JSON.
pub const JSON_ARGS_LABEL: &str = "json-args";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    AppsTrain,
    AppsDev,
    AppsTest,
    Humaneval,
    Custom,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::AppsTrain => "apps-train",
            Suite::AppsDev => "apps-dev",
            Suite::AppsTest => "apps-test",
            Suite::Humaneval => "humaneval",
            Suite::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    Introductory,
    Interview,
    Competition,
    None,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Introductory,
        Difficulty::Interview,
        Difficulty::Competition,
        Difficulty::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Introductory => "introductory",
            Difficulty::Interview => "interview",
            Difficulty::Competition => "competition",
            Difficulty::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IoMode {
    Stdio,
    FunctionCall,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub input: String,
    pub expected: String,
    pub label: Option<String>,
}

impl TestCase {
    pub fn new(input: impl Into<String>, expected: impl Into<String>) -> Self {
        TestCase {
            input: input.into(),
            expected: expected.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn is_script(&self) -> bool {
        self.label.as_deref() == Some(SCRIPT_LABEL)
    }

    /// Number of individual checks this test stands for: one for an I/O pair,
    /// the number of `assert` statements for a test program.
    pub fn check_count(&self) -> usize {
        if self.is_script() {
            count_asserts(&self.input).max(1)
        } else {
            1
        }
    }
}

fn count_asserts(program: &str) -> usize {
    let bytes = program.as_bytes();
    let is_ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    program
        .match_indices("assert")
        .filter(|(i, m)| {
            let before = *i == 0 || !is_ident(bytes[i - 1]);
            let end = i + m.len();
            let after = end >= bytes.len() || !is_ident(bytes[end]);
            before && after
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub id: String,
    pub suite: Suite,
    pub difficulty: Difficulty,
    pub description: String,
    pub example_tests: Vec<TestCase>,
    pub hidden_tests: Vec<TestCase>,
    pub ground_truths: Vec<String>,
    pub io_mode: IoMode,
    pub entry_point: Option<String>,
}

impl Problem {
    /// Structural invariants that hold for every stored problem.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: &str| Error::InvalidProblem {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id"));
        }
        if self.io_mode == IoMode::FunctionCall && self.entry_point.as_deref().is_none_or(|e| e.trim().is_empty()) {
            return Err(invalid("function-call problems need an entry_point"));
        }
        Ok(())
    }

    /// Additional requirement for problems that take part in evaluation.
    pub fn validate_for_evaluation(&self) -> Result<()> {
        self.validate()?;
        if self.hidden_tests.is_empty() {
            return Err(Error::InvalidProblem {
                id: self.id.clone(),
                message: "no hidden tests".into(),
            });
        }
        Ok(())
    }

    /// The single example test used for execution feedback.
    pub fn first_example(&self) -> Option<&TestCase> {
        self.example_tests.first()
    }

    pub fn hidden_check_count(&self) -> usize {
        self.hidden_tests.iter().map(TestCase::check_count).sum()
    }

    /// Whether the example was inferred rather than found in the description.
    pub fn example_inferred(&self) -> bool {
        self.example_tests
            .first()
            .and_then(|t| t.label.as_deref())
            .is_some_and(|l| l == INFERRED_EXAMPLE_LABEL)
    }

    /// Example tests that are also listed as hidden tests.
    pub fn overlapping_tests(&self) -> usize {
        let hidden: HashSet<(&str, &str)> = self
            .hidden_tests
            .iter()
            .map(|t| (t.input.as_str(), t.expected.as_str()))
            .collect();
        self.example_tests
            .iter()
            .filter(|t| hidden.contains(&(t.input.as_str(), t.expected.as_str())))
            .count()
    }
}

/// Problems keyed by id, in corpus order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    problems: Vec<Problem>,
    index: std::collections::HashMap<String, usize>,
}

impl Corpus {
    pub fn new(problems: Vec<Problem>) -> Result<Self> {
        let mut index = std::collections::HashMap::with_capacity(problems.len());
        for (i, p) in problems.iter().enumerate() {
            p.validate()?;
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateProblem(p.id.clone()));
            }
        }
        Ok(Corpus { problems, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Corpus::new(read_corpus(path)?)
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn get(&self, id: &str) -> Result<&Problem> {
        self.index
            .get(id)
            .map(|&i| &self.problems[i])
            .ok_or_else(|| Error::UnknownProblem(id.to_string()))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<Problem>> {
    let problems: Vec<Problem> = jsonl::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for p in &problems {
        p.validate()?;
        if !seen.insert(p.id.as_str()) {
            return Err(Error::DuplicateProblem(p.id.clone()));
        }
    }
    Ok(problems)
}

pub fn write_corpus(path: &Path, problems: &[Problem]) -> Result<()> {
    jsonl::write_jsonl(path, problems)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn stdio_problem(id: &str, hidden: usize) -> Problem {
        Problem {
            id: id.into(),
            suite: Suite::Custom,
            difficulty: Difficulty::None,
            description: "Add one.\nInput\n1\nOutput\n2".into(),
            example_tests: vec![TestCase::new("1\n", "2\n").with_label(EXAMPLE_LABEL)],
            hidden_tests: (0..hidden)
                .map(|i| TestCase::new(format!("{i}\n"), format!("{}\n", i + 1)))
                .collect(),
            ground_truths: vec!["print(int(input())+1)\n".into()],
            io_mode: IoMode::Stdio,
            entry_point: None,
        }
    }

    #[test]
    fn function_call_needs_entry_point() {
        let mut p = stdio_problem("p", 1);
        p.io_mode = IoMode::FunctionCall;
        assert!(p.validate().is_err());
        p.entry_point = Some("f".into());
        p.validate().unwrap();
    }

    #[test]
    fn evaluation_requires_hidden_tests() {
        let p = stdio_problem("p", 0);
        p.validate().unwrap();
        assert!(p.validate_for_evaluation().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![stdio_problem("a", 1), stdio_problem("a", 2)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateProblem(id) if id == "a"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut v = serde_json::to_value(stdio_problem("a", 1)).unwrap();
        v["extra"] = serde_json::json!(1);
        std::fs::write(&path, format!("{v}\n")).unwrap();
        assert!(read_corpus(&path).is_err());
    }

    #[test]
    fn record_has_exact_field_set() {
        let v = serde_json::to_value(stdio_problem("a", 1)).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "description",
                "difficulty",
                "entry_point",
                "example_tests",
                "ground_truths",
                "hidden_tests",
                "id",
                "io_mode",
                "suite"
            ]
        );
        assert_eq!(v["suite"], "custom");
        assert_eq!(v["io_mode"], "stdio");
        assert!(v["example_tests"][0].get("label").is_some());
    }

    #[test]
    fn script_tests_count_assertions() {
        let t = TestCase::new(
            "def check(candidate):\n    assert candidate(1) == 2\n    assert candidate(2) == 3\n    # reassert nothing\n",
            "",
        )
        .with_label(SCRIPT_LABEL);
        assert_eq!(t.check_count(), 2);
        assert_eq!(TestCase::new("1", "2").check_count(), 1);
    }

    fn arb_text() -> impl Strategy<Value = String> {
        prop_oneof![
            "[ -~]{0,20}",
            "[a-z\\n\\r\\t ]{0,20}",
            any::<String>().prop_map(|s| s.chars().take(20).collect()),
        ]
    }

    fn arb_test() -> impl Strategy<Value = TestCase> {
        (arb_text(), arb_text(), proptest::option::of("[a-z-]{1,8}")).prop_map(|(input, expected, label)| TestCase {
            input,
            expected,
            label,
        })
    }

    proptest! {
        #[test]
        fn corpus_roundtrip(
            descs in proptest::collection::vec(arb_text(), 1..5),
            examples in proptest::collection::vec(arb_test(), 0..3),
            hidden in proptest::collection::vec(arb_test(), 1..4),
        ) {
            let problems: Vec<Problem> = descs
                .into_iter()
                .enumerate()
                .map(|(i, d)| Problem {
                    id: format!("p{i}"),
                    suite: Suite::Custom,
                    difficulty: Difficulty::ALL[i % 4],
                    description: d,
                    example_tests: examples.clone(),
                    hidden_tests: hidden.clone(),
                    ground_truths: vec!["print(1)\r\n".into()],
                    io_mode: if i % 2 == 0 { IoMode::Stdio } else { IoMode::FunctionCall },
                    entry_point: if i % 2 == 0 { None } else { Some("f".into()) },
                })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.jsonl");
            write_corpus(&path, &problems).unwrap();
            prop_assert_eq!(read_corpus(&path).unwrap(), problems);
        }
    }
}
