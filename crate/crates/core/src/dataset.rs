//! Editor training data: (N, S, C) triplets from generator samples, each
//! paired with up to 15 correct target programs.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comment::build_comment;
use crate::generator::{generate, CompletionBackend, GeneratorConfig};
use crate::metrics::{comment_distribution, ClassShare};
use crate::sandbox::{execute, execute_suite, normalize_output, test_label, SandboxConfig};
use crate::store::Problem;
use crate::{Error, Result};

pub const MAX_TARGETS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    OriginalGt,
    GeneratedPassing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub program: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditorExample {
    pub problem_id: String,
    pub model_name: String,
    pub description: String,
    pub source_program: String,
    pub comment: String,
    pub comment_class: String,
    pub targets: Vec<Target>,
}

/// Target pool for a problem: passing generated programs first, then the
/// original ground truths, without normalized duplicates, at most 15.
pub fn select_targets(problem: &Problem, passing_generated: &[String]) -> Vec<Target> {
    let mut seen = HashSet::new();
    let pool = passing_generated
        .iter()
        .map(|p| (p, Provenance::GeneratedPassing))
        .chain(problem.ground_truths.iter().map(|p| (p, Provenance::OriginalGt)));
    let mut out = Vec::new();
    for (program, provenance) in pool {
        if out.len() == MAX_TARGETS {
            break;
        }
        let key = normalize_output(program);
        if key.trim().is_empty() || !seen.insert(key) {
            continue;
        }
        out.push(Target {
            program: program.clone(),
            provenance,
        });
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub problems: usize,
    pub examples: usize,
    /// Problems whose target pool was empty.
    pub dropped_empty_pool: usize,
    /// Problems without an example test, so no comment can be built.
    pub skipped_no_example: usize,
    /// Samples whose generation failed or came back empty.
    pub skipped_samples: usize,
    pub comment_distribution: Vec<ClassShare>,
}

#[derive(Debug, Clone)]
pub struct DatasetBuild {
    pub examples: Vec<EditorExample>,
    pub summary: BuildSummary,
}

enum ProblemResult {
    Examples(Vec<EditorExample>, usize),
    NoExample,
    EmptyPool(usize),
}

fn build_problem(
    problem: &Problem,
    config: &GeneratorConfig,
    backend: &dyn CompletionBackend,
    sandbox: &SandboxConfig,
) -> Result<ProblemResult> {
    let Some(example) = problem.first_example() else {
        return Ok(ProblemResult::NoExample);
    };
    let example = example.clone().with_label(test_label("example", 0));
    let samples = generate(problem, config, backend)?;
    let mut skipped = 0;
    let mut rows = Vec::new();
    let mut passing = Vec::new();
    for cand in samples {
        if cand.failed || cand.program.trim().is_empty() {
            log::warn!("{}: skipping sample {}", problem.id, cand.sample_index);
            skipped += 1;
            continue;
        }
        let outcome = execute(
            &cand.program,
            &example,
            problem.io_mode,
            problem.entry_point.as_deref(),
            sandbox,
        )?;
        let comment = build_comment(&outcome, &example)?;
        let verdict = execute_suite(
            &cand.program,
            &problem.hidden_tests,
            "hidden",
            problem.io_mode,
            problem.entry_point.as_deref(),
            sandbox,
            true,
        )?
        .verdict;
        if verdict {
            passing.push(cand.program.clone());
        }
        rows.push((cand, comment));
    }
    let targets = select_targets(problem, &passing);
    if targets.is_empty() {
        return Ok(ProblemResult::EmptyPool(skipped));
    }
    let examples = rows
        .into_iter()
        .map(|(cand, comment)| EditorExample {
            problem_id: problem.id.clone(),
            model_name: cand.model_name,
            description: problem.description.clone(),
            source_program: cand.program,
            comment: comment.text,
            comment_class: comment.comment_class,
            targets: targets.clone(),
        })
        .collect();
    Ok(ProblemResult::Examples(examples, skipped))
}

/// Samples `config.samples_per_problem` programs per problem and turns each
/// into a training example. Problems are processed in parallel and merged in
/// corpus order.
pub fn build_dataset(
    problems: &[Problem],
    config: &GeneratorConfig,
    backend: &dyn CompletionBackend,
    sandbox: &SandboxConfig,
    parallelism: usize,
) -> Result<DatasetBuild> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let results: Vec<ProblemResult> = pool.install(|| {
        problems
            .par_iter()
            .map(|p| build_problem(p, config, backend, sandbox))
            .collect::<Result<_>>()
    })?;
    let mut summary = BuildSummary {
        problems: problems.len(),
        ..Default::default()
    };
    let mut examples = Vec::new();
    for (problem, result) in problems.iter().zip(results) {
        match result {
            ProblemResult::Examples(rows, skipped) => {
                summary.skipped_samples += skipped;
                examples.extend(rows);
            }
            ProblemResult::NoExample => {
                log::warn!("{}: no example test, skipped", problem.id);
                summary.skipped_no_example += 1;
            }
            ProblemResult::EmptyPool(skipped) => {
                log::warn!("{}: no target programs, dropped", problem.id);
                summary.skipped_samples += skipped;
                summary.dropped_empty_pool += 1;
            }
        }
    }
    summary.examples = examples.len();
    summary.comment_distribution = comment_distribution(examples.iter().map(|e| e.comment_class.as_str()));
    Ok(DatasetBuild { examples, summary })
}

/// Datasets are specific to one generating model unless mixing is allowed.
pub fn check_single_model(examples: &[EditorExample], allow_mixed: bool) -> Result<()> {
    if allow_mixed {
        return Ok(());
    }
    let mut models: Vec<&str> = examples.iter().map(|e| e.model_name.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    if models.len() > 1 {
        return Err(Error::Invalid(format!(
            "dataset mixes models {models:?}; pass the allow-mixed flag to permit this"
        )));
    }
    Ok(())
}
