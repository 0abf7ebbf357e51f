//! Stage bodies, usable on their own by the per-stage subcommands.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comment::{build_comment, CommentRecord};
use crate::editor::{passthrough, Editor, EditorError};
use crate::generator::Candidate;
use crate::sandbox::{execute_jobs, test_label, ExecJob, OutcomeRecord, SandboxConfig};
use crate::store::{Corpus, Problem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSet {
    /// The first example test only.
    Example,
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditGating {
    Always,
    OnlyFailingExample,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))
}

/// Runs every candidate on the chosen tests of its problem. Candidates of
/// problems without an example test get no example outcomes.
pub fn exec_candidates(
    corpus: &Corpus,
    candidates: &[Candidate],
    tests: TestSet,
    sandbox: &SandboxConfig,
    jobs: usize,
    fail_fast: bool,
) -> Result<Vec<OutcomeRecord>> {
    let mut exec_jobs = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let problem = corpus.get(&cand.problem_id)?;
        let (slice, prefix) = match tests {
            TestSet::Example => (&problem.example_tests[..problem.example_tests.len().min(1)], "example"),
            TestSet::Hidden => {
                problem.validate_for_evaluation()?;
                (&problem.hidden_tests[..], "hidden")
            }
        };
        if slice.is_empty() {
            continue;
        }
        exec_jobs.push(ExecJob {
            candidate_id: &cand.candidate_id,
            program: &cand.program,
            tests: slice,
            label_prefix: prefix,
            io_mode: problem.io_mode,
            entry_point: problem.entry_point.as_deref(),
        });
    }
    Ok(execute_jobs(&exec_jobs, sandbox, jobs, fail_fast)?
        .into_iter()
        .flatten()
        .collect())
}

/// One comment per example outcome, in outcome order.
pub fn comment_outcomes(
    corpus: &Corpus,
    candidates: &[Candidate],
    outcomes: &[OutcomeRecord],
) -> Result<Vec<CommentRecord>> {
    let by_id: HashMap<&str, &Candidate> = candidates.iter().map(|c| (c.candidate_id.as_str(), c)).collect();
    let first = test_label("example", 0);
    let mut out = Vec::new();
    for rec in outcomes.iter().filter(|r| r.outcome.test_label == first) {
        let cand = by_id
            .get(rec.candidate_id.as_str())
            .ok_or_else(|| Error::Invalid(format!("outcome for unknown candidate {}", rec.candidate_id)))?;
        let problem = corpus.get(&cand.problem_id)?;
        let example = problem
            .first_example()
            .ok_or_else(|| Error::Invalid(format!("{} has no example test", problem.id)))?;
        out.push(CommentRecord::new(
            &rec.candidate_id,
            build_comment(&rec.outcome, example)?,
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSummary {
    /// Candidates sent to the editor (one call each).
    pub editor_calls: u64,
    /// Passed the example test and were copied through by gating.
    pub passthrough_gated: u64,
    /// Problem has no example test, so no comment exists.
    pub unedited_no_example: u64,
    /// Empty source, nothing to edit.
    pub unedited_empty_program: u64,
    /// The editor request failed; the parent program was kept.
    pub failed_edits: u64,
}

enum Plan<'a> {
    Edit(&'a Problem, &'a CommentRecord),
    Gated,
    NoExample,
    Empty,
}

/// One child per candidate: edited, or copied through when gating, a
/// missing example or an empty program rules the edit out.
pub fn edit_candidates(
    corpus: &Corpus,
    candidates: &[Candidate],
    example_outcomes: &[OutcomeRecord],
    comments: &[CommentRecord],
    editor: &Editor,
    gating: EditGating,
    jobs: usize,
) -> Result<(Vec<Candidate>, EditSummary)> {
    let first = test_label("example", 0);
    let passed: HashMap<&str, bool> = example_outcomes
        .iter()
        .filter(|r| r.outcome.test_label == first)
        .map(|r| (r.candidate_id.as_str(), r.outcome.is_passed()))
        .collect();
    let comment_of: HashMap<&str, &CommentRecord> = comments.iter().map(|c| (c.candidate_id.as_str(), c)).collect();

    let mut summary = EditSummary::default();
    let mut plans = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let problem = corpus.get(&cand.problem_id)?;
        let plan = if problem.first_example().is_none() {
            summary.unedited_no_example += 1;
            Plan::NoExample
        } else if gating == EditGating::OnlyFailingExample
            && passed.get(cand.candidate_id.as_str()).copied().unwrap_or(false)
        {
            summary.passthrough_gated += 1;
            Plan::Gated
        } else if cand.program.trim().is_empty() {
            summary.unedited_empty_program += 1;
            Plan::Empty
        } else {
            let comment = comment_of
                .get(cand.candidate_id.as_str())
                .ok_or_else(|| Error::Invalid(format!("no comment for candidate {}", cand.candidate_id)))?;
            summary.editor_calls += 1;
            Plan::Edit(problem, comment)
        };
        plans.push(plan);
    }

    let children: Vec<Candidate> = pool(jobs)?.install(|| {
        candidates
            .par_iter()
            .zip(plans.par_iter())
            .map(|(cand, plan)| match plan {
                Plan::Edit(problem, comment) => {
                    let input = editor.prepare(&problem.description, &cand.program, &comment.text)?;
                    editor.edit(cand, &input)
                }
                Plan::Gated | Plan::NoExample | Plan::Empty => Ok(passthrough(cand, &cand.model_name)),
            })
            .collect::<std::result::Result<_, EditorError>>()
    })?;
    summary.failed_edits = children.iter().filter(|c| c.failed).count() as u64;
    Ok((children, summary))
}
