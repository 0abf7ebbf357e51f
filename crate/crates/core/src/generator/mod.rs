//! Black-box program generation: prompt a completion backend k times per
//! problem and keep what comes back as candidates.

mod extract;
mod http;
mod mock;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::Problem;

pub use extract::extract_code;
pub use http::{HttpBackend, HttpSettings, RateLimiter};
pub use mock::{sanitize_id, MockBackend};

pub const API_KEY_ENV: &str = "SELFEDIT_API_KEY";
pub const ENDPOINT_ENV: &str = "SELFEDIT_ENDPOINT";

/// Appended to the description to mark where the program starts.
pub const ANSWER_MARKER: &str = "\nANSWER:\n";

#[derive(Error, Debug)]
pub enum BackendError {
    #[error("request failed: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no fixture for problem {0}")]
    MissingFixture(String),
    #[error("fixture error at {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("backend config: {0}")]
    Config(String),
}

impl BackendError {
    pub(crate) fn retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Malformed(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// One completion request. `problem_id` lets offline backends pick fixtures.
#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub problem_id: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;

    /// Number of wire requests issued, retries included.
    fn attempts(&self) -> u64 {
        0
    }
}

/// Counts logical calls made through a backend.
pub struct CountingBackend {
    inner: Arc<dyn CompletionBackend>,
    calls: AtomicU64,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>) -> Self {
        CountingBackend {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn attempts(&self) -> u64 {
        self.inner.attempts()
    }
}

impl CompletionBackend for CountingBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }

    fn attempts(&self) -> u64 {
        self.inner.attempts()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorBackendKind {
    HttpCompletion,
    Mock,
}

fn default_model() -> String {
    "mock".to_string()
}
fn default_temperature() -> f64 {
    0.8
}
fn default_k() -> usize {
    10
}
fn default_max_new_tokens() -> u32 {
    512
}
fn default_request_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub backend: GeneratorBackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_k")]
    pub samples_per_problem: usize,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default = "default_request_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub rate_limit_per_minute: Option<u32>,
    /// Mock backend only: directory of `<problem id>/NNN.txt` completions.
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
}

impl GeneratorConfig {
    pub fn mock(fixture_dir: impl Into<PathBuf>, k: usize) -> Self {
        GeneratorConfig {
            backend: GeneratorBackendKind::Mock,
            endpoint_url: None,
            model_name: default_model(),
            temperature: default_temperature(),
            samples_per_problem: k,
            max_new_tokens: default_max_new_tokens(),
            request_timeout_ms: default_request_timeout_ms(),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            rate_limit_per_minute: None,
            fixture_dir: Some(fixture_dir.into()),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config("temperature must be >= 0".into()));
        }
        if self.samples_per_problem == 0 {
            return Err(BackendError::Config("samples_per_problem must be >= 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::Config("max_new_tokens must be >= 1".into()));
        }
        if self.model_name.is_empty() {
            return Err(BackendError::Config("model_name is empty".into()));
        }
        Ok(())
    }

    pub fn http_settings(&self) -> HttpSettings {
        HttpSettings {
            endpoint_url: self.endpoint_url.clone(),
            model_name: self.model_name.clone(),
            request_timeout_ms: self.request_timeout_ms,
            max_retries: self.max_retries,
            retry_backoff_ms: self.retry_backoff_ms,
        }
    }

    /// Builds the configured backend. HTTP backends share `limiter`.
    pub fn build_backend(&self, limiter: Arc<RateLimiter>) -> Result<Arc<dyn CompletionBackend>, BackendError> {
        self.validate()?;
        Ok(match self.backend {
            GeneratorBackendKind::Mock => {
                let dir = self
                    .fixture_dir
                    .as_ref()
                    .ok_or_else(|| BackendError::Config("mock backend needs fixture_dir".into()))?;
                Arc::new(MockBackend::new(dir)?)
            }
            GeneratorBackendKind::HttpCompletion => Arc::new(HttpBackend::new(self.http_settings(), limiter)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Base,
    Edited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub candidate_id: String,
    pub problem_id: String,
    pub sample_index: usize,
    pub program: String,
    pub origin: Origin,
    pub edit_round: u32,
    pub parent_candidate_id: Option<String>,
    pub model_name: String,
    #[serde(default)]
    pub created_at: Option<String>,
    /// The request behind this candidate failed; `program` is a fallback.
    #[serde(default)]
    pub failed: bool,
}

pub fn base_candidate_id(problem_id: &str, sample_index: usize) -> String {
    format!("{problem_id}::s{sample_index}")
}

pub fn edited_candidate_id(problem_id: &str, sample_index: usize, round: u32) -> String {
    format!("{problem_id}::s{sample_index}::r{round}")
}

/// Splits an id made by `base_candidate_id` or `edited_candidate_id` into
/// problem id, sample index and edit round.
pub fn parse_candidate_id(id: &str) -> Option<(&str, usize, u32)> {
    let (rest, round) = match id.rsplit_once("::r") {
        Some((rest, r)) if !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()) => (rest, r.parse().ok()?),
        _ => (id, 0),
    };
    let (problem, sample) = rest.rsplit_once("::s")?;
    if sample.is_empty() || !sample.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((problem, sample.parse().ok()?, round))
}

impl Candidate {
    pub fn base(problem_id: &str, sample_index: usize, program: String, model_name: &str) -> Self {
        Candidate {
            candidate_id: base_candidate_id(problem_id, sample_index),
            problem_id: problem_id.to_string(),
            sample_index,
            program,
            origin: Origin::Base,
            edit_round: 0,
            parent_candidate_id: None,
            model_name: model_name.to_string(),
            created_at: None,
            failed: false,
        }
    }

    /// A child of `self` produced by one edit.
    pub fn edited(&self, program: String, model_name: &str) -> Self {
        let round = self.edit_round + 1;
        Candidate {
            candidate_id: edited_candidate_id(&self.problem_id, self.sample_index, round),
            problem_id: self.problem_id.clone(),
            sample_index: self.sample_index,
            program,
            origin: Origin::Edited,
            edit_round: round,
            parent_candidate_id: Some(self.candidate_id.clone()),
            model_name: model_name.to_string(),
            created_at: None,
            failed: false,
        }
    }

    pub fn check_provenance(&self) -> Result<(), String> {
        match (self.origin, self.edit_round, &self.parent_candidate_id) {
            (Origin::Base, 0, None) => Ok(()),
            (Origin::Edited, r, Some(_)) if r >= 1 => Ok(()),
            _ => Err(format!(
                "{}: origin {:?} with edit_round {} and parent {:?}",
                self.candidate_id, self.origin, self.edit_round, self.parent_candidate_id
            )),
        }
    }
}

pub fn generation_prompt(description: &str) -> String {
    format!("{description}{ANSWER_MARKER}")
}

/// Samples `samples_per_problem` programs for one problem. A sample whose
/// request fails for good becomes an empty, `failed` candidate.
pub fn generate(
    problem: &Problem,
    config: &GeneratorConfig,
    backend: &dyn CompletionBackend,
) -> Result<Vec<Candidate>, crate::Error> {
    if problem.description.trim().is_empty() {
        return Err(crate::Error::InvalidProblem {
            id: problem.id.clone(),
            message: "empty description".into(),
        });
    }
    let prompt = generation_prompt(&problem.description);
    let mut out = Vec::with_capacity(config.samples_per_problem);
    for index in 0..config.samples_per_problem {
        let request = CompletionRequest {
            problem_id: &problem.id,
            prompt: &prompt,
            temperature: config.temperature,
            max_tokens: config.max_new_tokens,
        };
        let candidate = match backend.complete(&request) {
            Ok(text) => Candidate::base(&problem.id, index, extract_code(&text), &config.model_name),
            Err(BackendError::MissingFixture(id)) => return Err(BackendError::MissingFixture(id).into()),
            Err(e) => {
                log::warn!("{}: sample {index} failed: {e}", problem.id);
                Candidate {
                    failed: true,
                    ..Candidate::base(&problem.id, index, String::new(), &config.model_name)
                }
            }
        };
        out.push(candidate);
    }
    Ok(out)
}

/// Generates for every problem on `parallelism` workers, in corpus order.
pub fn generate_all(
    problems: &[Problem],
    config: &GeneratorConfig,
    backend: &dyn CompletionBackend,
    parallelism: usize,
) -> Result<Vec<Candidate>, crate::Error> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| crate::Error::Invalid(format!("worker pool: {e}")))?;
    let per_problem: Vec<Vec<Candidate>> = pool.install(|| {
        problems
            .par_iter()
            .map(|p| generate(p, config, backend))
            .collect::<Result<_, _>>()
    })?;
    Ok(per_problem.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flaky {
        fail_every: usize,
        n: std::sync::Mutex<usize>,
    }

    impl CompletionBackend for Flaky {
        fn complete(&self, r: &CompletionRequest<'_>) -> Result<String, BackendError> {
            let mut n = self.n.lock().unwrap();
            *n += 1;
            if (*n).is_multiple_of(self.fail_every) {
                Err(BackendError::Transport("boom".into()))
            } else {
                Ok(format!("```python\nprint({:?})\n```", r.problem_id))
            }
        }
    }

    #[test]
    fn failed_samples_do_not_abort() {
        let p = crate::store::tests::stdio_problem("p1", 1);
        let backend = Flaky {
            fail_every: 2,
            n: Default::default(),
        };
        let mut config = GeneratorConfig::mock("unused", 4);
        config.model_name = "m".into();
        let out = generate(&p, &config, &backend).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.iter().map(|c| c.sample_index).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert_eq!(
            out.iter().map(|c| c.failed).collect::<Vec<_>>(),
            [false, true, false, true]
        );
        assert_eq!(out[0].program, "print(\"p1\")\n");
        assert_eq!(out[1].program, "");
        assert_eq!(out[2].candidate_id, "p1::s2");
    }

    #[test]
    fn provenance_rules() {
        let base = Candidate::base("p", 3, "x".into(), "m");
        base.check_provenance().unwrap();
        let e1 = base.edited("y".into(), "ed");
        assert_eq!(e1.candidate_id, "p::s3::r1");
        assert_eq!(e1.parent_candidate_id.as_deref(), Some("p::s3"));
        let e2 = e1.edited("z".into(), "ed");
        assert_eq!(
            (e2.edit_round, e2.parent_candidate_id.as_deref()),
            (2, Some("p::s3::r1"))
        );
        e2.check_provenance().unwrap();
        let bad = Candidate {
            parent_candidate_id: None,
            ..e2
        };
        assert!(bad.check_provenance().is_err());
    }

    #[test]
    fn candidate_ids_parse_back() {
        assert_eq!(parse_candidate_id("HumanEval/0::s3"), Some(("HumanEval/0", 3, 0)));
        assert_eq!(parse_candidate_id("a::b::s10::r2"), Some(("a::b", 10, 2)));
        assert_eq!(parse_candidate_id("nope"), None);
        assert_eq!(parse_candidate_id("p::sx"), None);
    }

    #[test]
    fn config_validation() {
        let mut c = GeneratorConfig::mock("x", 1);
        c.validate().unwrap();
        c.temperature = -0.1;
        assert!(c.validate().is_err());
        c.temperature = 0.0;
        c.samples_per_problem = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn candidate_round_trip() {
        let c = Candidate::base("HumanEval/0", 0, "def f(): pass".into(), "m");
        let line = serde_json::to_string(&c).unwrap();
        assert!(line.starts_with("{\"candidate_id\":\"HumanEval/0::s0\""));
        assert_eq!(serde_json::from_str::<Candidate>(&line).unwrap(), c);
    }
}
