//! The full loop as resumable stages: generate, then per edit round
//! execute-example / comment / edit, then hidden-test execution of both
//! populations and the report.

mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::comment::CommentRecord;
use crate::editor::{Editor, EditorConfig};
use crate::generator::{generate_all, Candidate, CompletionBackend, CountingBackend, GeneratorConfig, RateLimiter};
use crate::jsonl::{read_jsonl, to_jsonl_bytes, write_atomic, write_json_pretty};
use crate::metrics::{build_matrix, evaluate, Estimator, EvalReport};
use crate::sandbox::{OutcomeRecord, SandboxConfig};
use crate::store::{Corpus, Suite};
use crate::{Error, Result};

pub use manifest::{file_sha256, sha256_hex, Manifest, StageRecord, MANIFEST_FILE};
pub use stages::{comment_outcomes, edit_candidates, exec_candidates, EditGating, EditSummary, TestSet};

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const META_DIR: &str = "meta";

fn default_rounds() -> u32 {
    1
}
fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub output_dir: PathBuf,
    /// Samples per problem; overrides `generator.samples_per_problem`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_rounds")]
    pub edit_rounds: u32,
    /// Defaults to `only-failing-example` for HumanEval corpora and
    /// `always` otherwise.
    #[serde(default)]
    pub edit_gating: Option<EditGating>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub seed: u64,
    /// k values reported; defaults to 1, 5, 10 up to k, plus k.
    #[serde(default)]
    pub report_ks: Option<Vec<usize>>,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub hidden_fail_fast: bool,
    pub generator: GeneratorConfig,
    pub editor: EditorConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads a TOML config; relative paths are taken from the file's folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        if config.output_dir.as_os_str().is_empty() {
            return Err(Error::Config(format!("{}: output_dir is required", path.display())));
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus);
        resolve(base, &mut self.output_dir);
        if let Some(p) = self.generator.fixture_dir.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = self.editor.mock_rules.as_mut() {
            resolve(base, p);
        }
    }

    pub fn samples(&self) -> usize {
        self.k.unwrap_or(self.generator.samples_per_problem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edit_rounds < 1 {
            return Err(Error::Config("edit_rounds must be >= 1".into()));
        }
        if self.samples() == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if let Some(ks) = &self.report_ks {
            if ks.is_empty() || ks.iter().any(|&k| k == 0 || k > self.samples()) {
                return Err(Error::Config(format!(
                    "report_ks {ks:?} must lie in 1..={}",
                    self.samples()
                )));
            }
        }
        self.generator.validate()?;
        self.editor.validate()?;
        self.sandbox.validate()?;
        Ok(())
    }

    pub fn ks(&self) -> Vec<usize> {
        if let Some(ks) = &self.report_ks {
            return ks.clone();
        }
        let k = self.samples();
        let mut ks: Vec<usize> = [1, 5, 10].into_iter().filter(|&x| x < k).collect();
        ks.push(k);
        ks
    }

    pub fn gating_for(&self, corpus: &Corpus) -> EditGating {
        self.edit_gating.unwrap_or_else(|| {
            let humaneval = !corpus.is_empty() && corpus.problems().iter().all(|p| p.suite == Suite::Humaneval);
            if humaneval {
                EditGating::OnlyFailingExample
            } else {
                EditGating::Always
            }
        })
    }

    fn effective_generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            samples_per_problem: self.samples(),
            ..self.generator.clone()
        }
    }
}

/// File names of the artifacts.
pub mod files {
    pub const CANDIDATES: &str = "cands.jsonl";
    pub const OUTCOMES_HIDDEN_BASE: &str = "outcomes-hidden-base.jsonl";
    pub const OUTCOMES_HIDDEN_EDITED: &str = "outcomes-hidden-edited.jsonl";

    pub fn outcomes_example(round: u32) -> String {
        if round == 1 {
            "outcomes-example.jsonl".into()
        } else {
            format!("outcomes-example-r{round}.jsonl")
        }
    }

    pub fn comments(round: u32) -> String {
        if round == 1 {
            "comments.jsonl".into()
        } else {
            format!("comments-r{round}.jsonl")
        }
    }

    pub fn edited(round: u32) -> String {
        format!("edited-r{round}.jsonl")
    }

    /// Candidates entering edit round `round`.
    pub fn round_input(round: u32) -> String {
        if round == 1 {
            CANDIDATES.into()
        } else {
            edited(round - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Stage {
    Generate,
    ExecExample(u32),
    Comment(u32),
    Edit(u32),
    ExecHiddenBase,
    ExecHiddenEdited,
    Report,
}

impl Stage {
    fn name(&self) -> String {
        match self {
            Stage::Generate => "generate".into(),
            Stage::ExecExample(r) => format!("exec-example-r{r}"),
            Stage::Comment(r) => format!("comment-r{r}"),
            Stage::Edit(r) => format!("edit-r{r}"),
            Stage::ExecHiddenBase => "exec-hidden-base".into(),
            Stage::ExecHiddenEdited => "exec-hidden-edited".into(),
            Stage::Report => "report".into(),
        }
    }
}

fn check_stop_after(rounds: u32, stop_after: Option<&str>) -> Result<()> {
    match stop_after {
        Some(stop) if !plan(rounds).iter().any(|s| s.name() == stop) => {
            Err(Error::Config(format!("unknown stage {stop}")))
        }
        _ => Ok(()),
    }
}

fn plan(rounds: u32) -> Vec<Stage> {
    let mut stages = vec![Stage::Generate];
    for r in 1..=rounds {
        stages.extend([Stage::ExecExample(r), Stage::Comment(r), Stage::Edit(r)]);
    }
    stages.extend([Stage::ExecHiddenBase, Stage::ExecHiddenEdited, Stage::Report]);
    stages
}

/// Names of all stages for a run with `rounds` edit rounds, in order.
pub fn stage_names(rounds: u32) -> Vec<String> {
    plan(rounds).iter().map(Stage::name).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Complete(Box<EvalReport>),
    /// Stopped on request after the named stage.
    Stopped(String),
}

struct StageOutput {
    files: Vec<(String, Vec<u8>)>,
    counts: BTreeMap<String, u64>,
    /// Written under `meta/`, outside the checksummed data.
    meta: Vec<(String, Vec<u8>)>,
}

impl StageOutput {
    fn new() -> Self {
        StageOutput {
            files: Vec::new(),
            counts: BTreeMap::new(),
            meta: Vec::new(),
        }
    }
}

struct Runner {
    config: RunConfig,
    dir: PathBuf,
    corpus: Corpus,
    manifest: Manifest,
    limiter: Arc<RateLimiter>,
    generator: Option<Arc<dyn CompletionBackend>>,
    editor: Option<Editor>,
}

fn config_bytes(config: &RunConfig) -> Vec<u8> {
    let stored = RunConfig {
        output_dir: PathBuf::new(),
        ..config.clone()
    };
    let mut bytes = serde_json::to_vec_pretty(&stored).expect("config serializes");
    bytes.push(b'\n');
    bytes
}

fn read<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    read_jsonl(&dir.join(name))
}

fn zero_wall_times(records: &[OutcomeRecord]) -> (Vec<OutcomeRecord>, Vec<u8>) {
    let timings: Vec<Value> = records
        .iter()
        .map(|r| {
            json!({
                "candidate_id": r.candidate_id,
                "test_label": r.outcome.test_label,
                "wall_time_ms": r.outcome.wall_time_ms,
            })
        })
        .collect();
    let zeroed = records
        .iter()
        .cloned()
        .map(|mut r| {
            r.outcome.wall_time_ms = 0;
            r
        })
        .collect();
    (zeroed, to_jsonl_bytes(&timings))
}

impl Runner {
    fn open(config: RunConfig, dir: PathBuf, manifest: Manifest) -> Result<Self> {
        let corpus = Corpus::load(&config.corpus)?;
        if corpus.is_empty() {
            return Err(Error::Config(format!("corpus {} is empty", config.corpus.display())));
        }
        if config.gating_for(&corpus) == EditGating::OnlyFailingExample
            && corpus.problems().iter().all(|p| p.example_tests.is_empty())
        {
            return Err(Error::Config(
                "only-failing-example gating needs problems with example tests".into(),
            ));
        }
        let limiter = Arc::new(RateLimiter::new(config.generator.rate_limit_per_minute));
        Ok(Runner {
            config,
            dir,
            corpus,
            manifest,
            limiter,
            generator: None,
            editor: None,
        })
    }

    fn generator(&mut self) -> Result<Arc<dyn CompletionBackend>> {
        if self.generator.is_none() {
            self.generator = Some(self.config.effective_generator().build_backend(self.limiter.clone())?);
        }
        Ok(self.generator.clone().expect("set above"))
    }

    fn editor(&mut self) -> Result<&Editor> {
        if self.editor.is_none() {
            let generator = match self.config.editor.backend {
                crate::editor::EditorBackendKind::IclViaGenerator => {
                    Some((self.generator()?, self.config.generator.model_name.clone()))
                }
                _ => None,
            };
            self.editor = Some(Editor::new(&self.config.editor, generator, self.limiter.clone())?);
        }
        Ok(self.editor.as_ref().expect("set above"))
    }

    fn run_stage(&mut self, stage: &Stage) -> Result<StageOutput> {
        let jobs = self.config.parallelism;
        let mut out = StageOutput::new();
        match stage {
            Stage::Generate => {
                let config = self.config.effective_generator();
                let counting = CountingBackend::new(self.generator()?);
                let cands = generate_all(self.corpus.problems(), &config, &counting, jobs)?;
                out.counts.insert("generator_calls".into(), counting.calls());
                out.counts.insert("generator_requests".into(), counting.attempts());
                out.counts.insert(
                    "failed_generations".into(),
                    cands.iter().filter(|c| c.failed).count() as u64,
                );
                out.files.push((files::CANDIDATES.into(), to_jsonl_bytes(&cands)));
            }
            Stage::ExecExample(r) => {
                let cands: Vec<Candidate> = read(&self.dir, &files::round_input(*r))?;
                let recs = exec_candidates(
                    &self.corpus,
                    &cands,
                    TestSet::Example,
                    &self.config.sandbox,
                    jobs,
                    false,
                )?;
                self.push_outcomes(&mut out, files::outcomes_example(*r), &recs);
            }
            Stage::Comment(r) => {
                let cands: Vec<Candidate> = read(&self.dir, &files::round_input(*r))?;
                let recs: Vec<OutcomeRecord> = read(&self.dir, &files::outcomes_example(*r))?;
                let comments = comment_outcomes(&self.corpus, &cands, &recs)?;
                out.files.push((files::comments(*r), to_jsonl_bytes(&comments)));
            }
            Stage::Edit(r) => {
                let cands: Vec<Candidate> = read(&self.dir, &files::round_input(*r))?;
                let recs: Vec<OutcomeRecord> = read(&self.dir, &files::outcomes_example(*r))?;
                let comments: Vec<CommentRecord> = read(&self.dir, &files::comments(*r))?;
                let gating = self.config.gating_for(&self.corpus);
                self.editor()?;
                let corpus = &self.corpus;
                let editor = self.editor.as_ref().expect("built above");
                let before = (editor.calls(), editor.attempts());
                let (children, summary) = edit_candidates(corpus, &cands, &recs, &comments, editor, gating, jobs)?;
                let calls = editor.calls() - before.0;
                if calls != summary.editor_calls {
                    return Err(Error::Invalid(format!(
                        "editor saw {calls} calls for {} planned edits",
                        summary.editor_calls
                    )));
                }
                out.counts.insert("editor_calls".into(), calls);
                out.counts
                    .insert("editor_requests".into(), editor.attempts() - before.1);
                out.counts.insert("passthrough_gated".into(), summary.passthrough_gated);
                out.counts
                    .insert("unedited_no_example".into(), summary.unedited_no_example);
                out.counts
                    .insert("unedited_empty_program".into(), summary.unedited_empty_program);
                out.counts.insert("failed_edits".into(), summary.failed_edits);
                out.files.push((files::edited(*r), to_jsonl_bytes(&children)));
            }
            Stage::ExecHiddenBase | Stage::ExecHiddenEdited => {
                let (input, output) = if *stage == Stage::ExecHiddenBase {
                    (files::CANDIDATES.to_string(), files::OUTCOMES_HIDDEN_BASE)
                } else {
                    (files::edited(self.config.edit_rounds), files::OUTCOMES_HIDDEN_EDITED)
                };
                let cands: Vec<Candidate> = read(&self.dir, &input)?;
                let fail_fast = self.config.hidden_fail_fast;
                let recs = exec_candidates(
                    &self.corpus,
                    &cands,
                    TestSet::Hidden,
                    &self.config.sandbox,
                    jobs,
                    fail_fast,
                )?;
                self.push_outcomes(&mut out, output.to_string(), &recs);
            }
            Stage::Report => {
                let report = self.report()?;
                let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
                bytes.push(b'\n');
                out.files.push((REPORT_FILE.into(), bytes));
            }
        }
        Ok(out)
    }

    fn push_outcomes(&self, out: &mut StageOutput, name: String, recs: &[OutcomeRecord]) {
        let (zeroed, timings) = zero_wall_times(recs);
        out.meta.push((format!("wall-times-{name}"), timings));
        out.files.push((name, to_jsonl_bytes(&zeroed)));
    }

    fn report(&self) -> Result<EvalReport> {
        let rounds = self.config.edit_rounds;
        let base: Vec<Candidate> = read(&self.dir, files::CANDIDATES)?;
        let base_out: Vec<OutcomeRecord> = read(&self.dir, files::OUTCOMES_HIDDEN_BASE)?;
        let edited: Vec<Candidate> = read(&self.dir, &files::edited(rounds))?;
        let edited_out: Vec<OutcomeRecord> = read(&self.dir, files::OUTCOMES_HIDDEN_EDITED)?;
        let comments: Vec<CommentRecord> = read(&self.dir, &files::comments(1))?;
        let matrix = build_matrix(&self.corpus, (&base, &base_out), Some((&edited, &edited_out)))?;
        let classes: Vec<String> = comments.into_iter().map(|c| c.comment_class).collect();
        let mut report = evaluate(&matrix, &self.config.ks(), self.config.estimator, &classes)?;

        let m = &self.manifest;
        let no_example_problems = self
            .corpus
            .problems()
            .iter()
            .filter(|p| p.example_tests.is_empty())
            .count();
        let meta = json!({
            "problems": self.corpus.len(),
            "k": self.config.samples(),
            "edit_rounds": rounds,
            "edit_gating": self.config.gating_for(&self.corpus),
            "estimator": self.config.estimator,
            "seed": self.config.seed,
            "generator_model": self.config.generator.model_name,
            "editor_model": self.editor_model_name(),
            "generator_calls": m.total("generator_calls"),
            "generator_requests": m.total("generator_requests"),
            "editor_calls": m.total("editor_calls"),
            "editor_requests": m.total("editor_requests"),
            "failed_generations": m.total("failed_generations"),
            "failed_edits": m.total("failed_edits"),
            "passthrough_gated": m.total("passthrough_gated"),
            "unedited_no_example": m.total("unedited_no_example"),
            "unedited_no_example_problems": no_example_problems,
            "unedited_empty_program": m.total("unedited_empty_program"),
        });
        if let Value::Object(map) = meta {
            report.meta = map;
        }
        Ok(report)
    }

    fn editor_model_name(&self) -> String {
        match self.config.editor.backend {
            crate::editor::EditorBackendKind::IclViaGenerator => self.config.generator.model_name.clone(),
            _ => self.config.editor.model_name.clone(),
        }
    }

    fn record_timing(&self, stage: &str, started: chrono::DateTime<chrono::Utc>, wall: u128) -> Result<()> {
        let path = self.dir.join(META_DIR).join("timings.json");
        let mut timings: BTreeMap<String, Value> = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        timings.insert(
            stage.to_string(),
            json!({
                "started_at": started.to_rfc3339(),
                "finished_at": chrono::Utc::now().to_rfc3339(),
                "wall_ms": wall as u64,
            }),
        );
        write_json_pretty(&path, &timings)
    }

    fn run(mut self, stop_after: Option<&str>) -> Result<RunStatus> {
        let stages = plan(self.config.edit_rounds);
        check_stop_after(self.config.edit_rounds, stop_after)?;
        fs::create_dir_all(self.dir.join(META_DIR)).map_err(|e| Error::io(self.dir.join(META_DIR), e))?;
        for stage in &stages {
            let name = stage.name();
            if self.manifest.is_done(&name) {
                log::debug!("stage {name} already complete");
            } else {
                log::info!("stage {name}");
                let started = chrono::Utc::now();
                let clock = Instant::now();
                let output = self.run_stage(stage).map_err(|e| Error::Stage {
                    stage: name.clone(),
                    message: e.to_string(),
                })?;
                let mut outputs = BTreeMap::new();
                for (file, bytes) in &output.files {
                    write_atomic(&self.dir.join(file), bytes)?;
                    outputs.insert(file.clone(), sha256_hex(bytes));
                }
                for (file, bytes) in &output.meta {
                    write_atomic(&self.dir.join(META_DIR).join(file), bytes)?;
                }
                self.manifest.stages.push(StageRecord {
                    name: name.clone(),
                    outputs,
                    counts: output.counts,
                });
                if *stage == Stage::Report {
                    self.manifest.complete = true;
                }
                self.manifest.save(&self.dir)?;
                self.record_timing(&name, started, clock.elapsed().as_millis())?;
            }
            if stop_after == Some(name.as_str()) && !self.manifest.complete {
                return Ok(RunStatus::Stopped(name));
            }
        }
        let report_path = self.dir.join(REPORT_FILE);
        let text = fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
        let report: EvalReport =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{REPORT_FILE}: {e}")))?;
        Ok(RunStatus::Complete(Box::new(report)))
    }
}

/// Starts a fresh run in `config.output_dir`, optionally stopping after the
/// named stage.
pub fn run_until(config: &RunConfig, stop_after: Option<&str>) -> Result<RunStatus> {
    config.validate()?;
    check_stop_after(config.edit_rounds, stop_after)?;
    let dir = config.output_dir.clone();
    if dir.join(MANIFEST_FILE).exists() {
        return Err(Error::Config(format!(
            "{} already holds a run; use resume or choose another output_dir",
            dir.display()
        )));
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let bytes = config_bytes(config);
    write_atomic(&dir.join(CONFIG_FILE), &bytes)?;
    let runner = Runner::open(config.clone(), dir, Manifest::new(sha256_hex(&bytes)))?;
    runner.manifest.save(&runner.dir)?;
    runner.run(stop_after)
}

pub fn run_pipeline(config: &RunConfig) -> Result<EvalReport> {
    match run_until(config, None)? {
        RunStatus::Complete(report) => Ok(*report),
        RunStatus::Stopped(stage) => Err(Error::Invalid(format!("run stopped after {stage}"))),
    }
}

/// Continues a run from its last completed stage. Completed stages are
/// checked against their checksums and never rerun.
pub fn resume_until(artifact_dir: &Path, stop_after: Option<&str>) -> Result<RunStatus> {
    let manifest = Manifest::load(artifact_dir)?;
    let config_path = artifact_dir.join(CONFIG_FILE);
    let bytes = fs::read(&config_path).map_err(|e| Error::io(&config_path, e))?;
    if sha256_hex(&bytes) != manifest.config_sha256 {
        return Err(Error::Manifest(format!(
            "{} does not match the manifest; delete the artifact directory and start a fresh run",
            config_path.display()
        )));
    }
    manifest.verify(artifact_dir)?;
    let mut config: RunConfig =
        serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    config.output_dir = artifact_dir.to_path_buf();
    config.validate()?;
    Runner::open(config, artifact_dir.to_path_buf(), manifest)?.run(stop_after)
}

pub fn resume(artifact_dir: &Path) -> Result<EvalReport> {
    match resume_until(artifact_dir, None)? {
        RunStatus::Complete(report) => Ok(*report),
        RunStatus::Stopped(stage) => Err(Error::Invalid(format!("run stopped after {stage}"))),
    }
}
