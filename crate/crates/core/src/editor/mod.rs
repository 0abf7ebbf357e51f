//! The fault-aware editor: serialize (N, S, C), ask a backend for one
//! refined program, and record it as an edited candidate.

mod mock;
mod serialize;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comment::render;
use crate::generator::{
    extract_code, Candidate, CompletionBackend, CompletionRequest, CountingBackend, HttpBackend, HttpSettings,
    RateLimiter,
};

pub use mock::{MockEditor, MockRule};
pub use serialize::{
    escape, parse_serialized, unescape, CharProxy, Tokenizer, CHARS_PER_TOKEN, CMNT, CODE, DEFAULT_INPUT_BUDGET,
    DEFAULT_OUTPUT_BUDGET, EOS, MARKERS, SOS,
};

const ICL_TEMPLATE: &str = include_str!("../../templates/icl.txt");

pub const ICL_INSTRUCTION: &str = "Based on the comment above, edit the code so it solves the problem and passes the test case. Output only the complete corrected program.";

#[derive(Error, Debug)]
pub enum EditorError {
    #[error("source program is empty")]
    EmptyProgram,
    #[error("comment is empty")]
    EmptyComment,
    #[error("description is empty")]
    EmptyDescription,
    #[error("comment alone needs {tokens} tokens, over the input budget of {budget}")]
    CommentOverBudget { tokens: usize, budget: usize },
    #[error("cannot parse serialized editor input: {0}")]
    Parse(String),
    #[error("editor config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorInput {
    pub description: String,
    pub source_program: String,
    pub comment: String,
    pub serialized: String,
    pub input_token_budget: usize,
    pub output_token_budget: usize,
}

/// Builds the editor input, shortening N and then S until the serialized
/// text fits `input_token_budget`.
pub fn serialize_input(
    description: &str,
    source_program: &str,
    comment: &str,
    input_token_budget: usize,
    output_token_budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<EditorInput, EditorError> {
    if source_program.trim().is_empty() {
        return Err(EditorError::EmptyProgram);
    }
    if comment.trim().is_empty() {
        return Err(EditorError::EmptyComment);
    }
    let (n, s, c) = serialize::fit_to_budget(description, source_program, comment, input_token_budget, tokenizer)?;
    Ok(EditorInput {
        serialized: serialize::assemble(&n, &s, &c),
        description: n,
        source_program: s,
        comment: c,
        input_token_budget,
        output_token_budget,
    })
}

/// Zero-shot self-edit prompt for a general-purpose model.
pub fn build_icl_prompt(description: &str, source_program: &str, comment: &str) -> Result<String, EditorError> {
    if description.trim().is_empty() {
        return Err(EditorError::EmptyDescription);
    }
    let template = ICL_TEMPLATE.strip_suffix('\n').unwrap_or(ICL_TEMPLATE);
    Ok(render(
        template,
        &[
            ("description", description.to_string()),
            ("program", source_program.to_string()),
            ("comment", comment.to_string()),
        ],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditorBackendKind {
    HttpSeq2seq,
    IclViaGenerator,
    Mock,
}

/// How over-long inputs are measured; both drop N's head first, then S's
/// middle. `character-proxy` always counts 4 characters per token;
/// `truncate-description-head-preserving-tail` counts with the tokenizer
/// handed to the editor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationPolicy {
    TruncateDescriptionHeadPreservingTail,
    #[default]
    CharacterProxy,
}

fn default_temperature() -> f64 {
    0.8
}
fn default_true() -> bool {
    true
}
fn default_input_budget() -> usize {
    DEFAULT_INPUT_BUDGET
}
fn default_output_budget() -> usize {
    DEFAULT_OUTPUT_BUDGET
}
fn default_model() -> String {
    "editor".to_string()
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
pub struct EditorConfig {
    pub backend: EditorBackendKind,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_true")]
    pub one_output_per_input: bool,
    #[serde(default)]
    pub truncation_policy: TruncationPolicy,
    #[serde(default = "default_input_budget")]
    pub input_token_budget: usize,
    #[serde(default = "default_output_budget")]
    pub output_token_budget: usize,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default = "default_request_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Mock backend only: JSON file with a list of rewrite rules.
    #[serde(default)]
    pub mock_rules: Option<PathBuf>,
}

impl EditorConfig {
    pub fn mock(rules: Option<PathBuf>) -> Self {
        EditorConfig {
            backend: EditorBackendKind::Mock,
            temperature: default_temperature(),
            one_output_per_input: true,
            truncation_policy: TruncationPolicy::default(),
            input_token_budget: DEFAULT_INPUT_BUDGET,
            output_token_budget: DEFAULT_OUTPUT_BUDGET,
            endpoint_url: None,
            model_name: "mock-editor".into(),
            request_timeout_ms: default_request_timeout_ms(),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            mock_rules: rules,
        }
    }

    pub fn validate(&self) -> Result<(), EditorError> {
        if !self.one_output_per_input {
            return Err(EditorError::Config("one_output_per_input must be true".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(EditorError::Config("temperature must be >= 0".into()));
        }
        if self.input_token_budget == 0 || self.output_token_budget == 0 {
            return Err(EditorError::Config("token budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PromptStyle {
    Serialized,
    Icl,
}

/// An editor bound to a backend. Every `edit` is one logical backend call.
pub struct Editor {
    backend: CountingBackend,
    style: PromptStyle,
    model_name: String,
    temperature: f64,
    output_token_budget: usize,
    input_token_budget: usize,
    tokenizer: Box<dyn Tokenizer>,
}

impl Editor {
    /// `generator` is required for `icl-via-generator` and is reused as is,
    /// rate limiter included.
    pub fn new(
        config: &EditorConfig,
        generator: Option<(Arc<dyn CompletionBackend>, String)>,
        limiter: Arc<RateLimiter>,
    ) -> Result<Self, crate::Error> {
        config.validate()?;
        let (backend, style, model_name): (Arc<dyn CompletionBackend>, _, _) = match config.backend {
            EditorBackendKind::Mock => {
                let rules = match &config.mock_rules {
                    Some(path) => MockRule::load(path)?,
                    None => Vec::new(),
                };
                (
                    Arc::new(MockEditor::new(rules)),
                    PromptStyle::Serialized,
                    config.model_name.clone(),
                )
            }
            EditorBackendKind::HttpSeq2seq => {
                let settings = HttpSettings {
                    endpoint_url: config.endpoint_url.clone(),
                    model_name: config.model_name.clone(),
                    request_timeout_ms: config.request_timeout_ms,
                    max_retries: config.max_retries,
                    retry_backoff_ms: config.retry_backoff_ms,
                };
                (
                    Arc::new(HttpBackend::new(settings, limiter)?),
                    PromptStyle::Serialized,
                    config.model_name.clone(),
                )
            }
            EditorBackendKind::IclViaGenerator => {
                let (backend, model) = generator
                    .ok_or_else(|| EditorError::Config("icl-via-generator needs a generator backend".into()))?;
                (backend, PromptStyle::Icl, model)
            }
        };
        Ok(Self::with_backend(
            backend,
            config,
            model_name,
            style == PromptStyle::Icl,
        ))
    }

    pub fn with_backend(
        backend: Arc<dyn CompletionBackend>,
        config: &EditorConfig,
        model_name: String,
        icl: bool,
    ) -> Self {
        Editor {
            backend: CountingBackend::new(backend),
            style: if icl { PromptStyle::Icl } else { PromptStyle::Serialized },
            model_name,
            temperature: config.temperature,
            output_token_budget: config.output_token_budget,
            input_token_budget: config.input_token_budget,
            tokenizer: Box::new(CharProxy),
        }
    }

    pub fn set_tokenizer(&mut self, tokenizer: Box<dyn Tokenizer>) {
        self.tokenizer = tokenizer;
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn calls(&self) -> u64 {
        self.backend.calls()
    }

    pub fn attempts(&self) -> u64 {
        self.backend.attempts()
    }

    pub fn prepare(&self, description: &str, program: &str, comment: &str) -> Result<EditorInput, EditorError> {
        serialize_input(
            description,
            program,
            comment,
            self.input_token_budget,
            self.output_token_budget,
            self.tokenizer.as_ref(),
        )
    }

    /// One edited child of `parent`. A failed request yields the parent's
    /// program with `failed` set.
    pub fn edit(&self, parent: &Candidate, input: &EditorInput) -> Result<Candidate, EditorError> {
        let prompt = match self.style {
            PromptStyle::Serialized => input.serialized.clone(),
            PromptStyle::Icl => build_icl_prompt(&input.description, &input.source_program, &input.comment)?,
        };
        let request = CompletionRequest {
            problem_id: &parent.problem_id,
            prompt: &prompt,
            temperature: self.temperature,
            max_tokens: self.output_token_budget as u32,
        };
        Ok(match self.backend.complete(&request) {
            Ok(text) => {
                let program = match self.style {
                    PromptStyle::Serialized => text.strip_suffix(EOS).unwrap_or(&text).to_string(),
                    PromptStyle::Icl => extract_code(&text),
                };
                let program = self.tokenizer.truncate(&program, self.output_token_budget);
                parent.edited(program, &self.model_name)
            }
            Err(e) => {
                log::warn!("{}: edit failed: {e}", parent.candidate_id);
                Candidate {
                    failed: true,
                    ..parent.edited(parent.program.clone(), &self.model_name)
                }
            }
        })
    }
}

/// Identity edit used when a candidate is not sent to the editor.
pub fn passthrough(parent: &Candidate, model_name: &str) -> Candidate {
    parent.edited(parent.program.clone(), model_name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::BackendError;

    #[test]
    fn serialize_direct() {
        let input = serialize_input("desc", "x=1", "Pass the example test case.", 1024, 512, &CharProxy).unwrap();
        assert_eq!(
            input.serialized,
            "[SOS]desc[CODE]x=1[CMNT]Pass the example test case.[EOS]"
        );
        assert!(matches!(
            serialize_input("d", "", "c", 10, 10, &CharProxy),
            Err(EditorError::EmptyProgram)
        ));
        assert!(matches!(
            serialize_input("d", "x", " ", 10, 10, &CharProxy),
            Err(EditorError::EmptyComment)
        ));
    }

    #[test]
    fn oversized_description_keeps_comment() {
        let n = "word ".repeat(5000);
        let c = "Wrong answer on the example test case.\nInput:\n1\nExpected output:\n2\nActual output:\n3\nRewrite the code.";
        let input = serialize_input(&n, "print(1)", c, 1024, 512, &CharProxy).unwrap();
        assert!(input.serialized.chars().count() <= 4096);
        assert_eq!(input.comment, c);
        assert!(input.serialized.ends_with(&format!("{c}[EOS]")));
    }

    #[test]
    fn icl_prompt() {
        let p = build_icl_prompt("Add one.", "print(x+2)", "Wrong answer on the example test case.").unwrap();
        assert!(p.contains("Add one.") && p.contains("print(x+2)") && p.contains("Wrong answer"));
        assert!(p.ends_with(ICL_INSTRUCTION));
        assert!(build_icl_prompt("d", "s", "Pass the example test case.").is_ok());
        assert!(matches!(
            build_icl_prompt("", "s", "c"),
            Err(EditorError::EmptyDescription)
        ));
    }

    struct Fails;
    impl CompletionBackend for Fails {
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, BackendError> {
            Err(BackendError::Transport("down".into()))
        }
    }

    #[test]
    fn failure_keeps_parent_program() {
        let editor = Editor::with_backend(Arc::new(Fails), &EditorConfig::mock(None), "e".into(), false);
        let parent = Candidate::base("p", 0, "print(3)".into(), "g");
        let input = editor.prepare("d", &parent.program, "c").unwrap();
        let child = editor.edit(&parent, &input).unwrap();
        assert!(child.failed);
        assert_eq!(child.program, "print(3)");
        assert_eq!(child.edit_round, 1);
        assert_eq!(editor.calls(), 1);
    }

    #[test]
    fn identity_mock_increments_round() {
        let editor = Editor::new(&EditorConfig::mock(None), None, Arc::new(RateLimiter::unlimited())).unwrap();
        let parent = Candidate::base("p", 1, "print(3)\n".into(), "g");
        let input = editor.prepare("d", &parent.program, "c").unwrap();
        let child = editor.edit(&parent, &input).unwrap();
        assert_eq!(child.program, parent.program);
        assert_eq!(
            (child.edit_round, child.parent_candidate_id.as_deref()),
            (1, Some("p::s1"))
        );
    }

    #[test]
    fn config_rejects_multi_output() {
        let mut c = EditorConfig::mock(None);
        c.one_output_per_input = false;
        assert!(c.validate().is_err());
    }
}
