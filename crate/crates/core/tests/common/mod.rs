#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use selfedit_core::editor::MockRule;
use selfedit_core::jsonl::write_jsonl;
use selfedit_core::pipeline::{EditGating, RunConfig};
use selfedit_core::store::{ingest_humaneval, Problem};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn humaneval_archive() -> PathBuf {
    data_dir().join("HumanEval.jsonl.gz")
}

/// The 10-problem mock run, writing into `out`.
pub fn e2e_config(out: &Path) -> RunConfig {
    let mut config = RunConfig::load(&data_dir().join("e2e/run.toml")).expect("e2e config");
    config.output_dir = out.to_path_buf();
    config
}

/// A HumanEval slice with one reference and one broken sample per problem.
///
/// The editor rules would rewrite any program they see, so a program that
/// reaches the editor always changes.
pub fn humaneval_gating_config(work: &Path, problems: usize) -> (RunConfig, Vec<Problem>) {
    let all = ingest_humaneval(&humaneval_archive()).expect("humaneval archive");
    let picked: Vec<Problem> = all
        .into_iter()
        .filter(|p| !p.example_tests.is_empty())
        .take(problems)
        .collect();
    let corpus = work.join("corpus.jsonl");
    write_jsonl(&corpus, &picked).unwrap();
    let fixtures = work.join("fixtures");
    for p in &picked {
        let dir = fixtures.join(p.id.replace('/', "_"));
        fs::create_dir_all(&dir).unwrap();
        let prompt = p.description.trim_end_matches("\nUse Call-Based format");
        fs::write(dir.join("000.txt"), &p.ground_truths[0]).unwrap();
        fs::write(dir.join("001.txt"), format!("{prompt}    return None\n")).unwrap();
    }
    let rules = vec![
        MockRule {
            when_comment_contains: None,
            problem_id: None,
            find: "    return None\n".into(),
            replace: "    return None  # edited\n".into(),
        },
        MockRule {
            when_comment_contains: None,
            problem_id: None,
            find: "def ".into(),
            replace: "def  ".into(),
        },
    ];
    let rules_path = work.join("rules.json");
    fs::write(&rules_path, serde_json::to_string(&rules).unwrap()).unwrap();

    let mut config = RunConfig::load(&data_dir().join("e2e/run.toml")).unwrap();
    config.corpus = corpus;
    config.output_dir = work.join("run");
    config.generator.fixture_dir = Some(fixtures);
    config.editor.mock_rules = Some(rules_path);
    config.edit_gating = Some(EditGating::OnlyFailingExample);
    config.sandbox.time_limit_ms = 4000;
    (config, picked)
}
