use std::path::Path;

use serde::{Deserialize, Serialize};

use super::parse_serialized;
use crate::generator::{BackendError, CompletionBackend, CompletionRequest};

/// Rewrite `find` to `replace` in the program when the conditions hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub when_comment_contains: Option<String>,
    #[serde(default)]
    pub problem_id: Option<String>,
    pub find: String,
    pub replace: String,
}

impl MockRule {
    pub fn load(path: &Path) -> crate::Result<Vec<MockRule>> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| crate::Error::Record {
            path: path.to_path_buf(),
            line: 1,
            source,
        })
    }

    fn applies(&self, problem_id: &str, comment: &str, program: &str) -> bool {
        self.problem_id.as_deref().is_none_or(|id| id == problem_id)
            && self
                .when_comment_contains
                .as_deref()
                .is_none_or(|s| comment.contains(s))
            && !self.find.is_empty()
            && program.contains(&self.find)
    }
}

/// Offline editor: reads the serialized input back into (N, S, C) and
/// applies the first matching rule to S. With no matching rule the program
/// comes back unchanged.
pub struct MockEditor {
    rules: Vec<MockRule>,
}

impl MockEditor {
    pub fn new(rules: Vec<MockRule>) -> Self {
        MockEditor { rules }
    }

    pub fn apply(&self, problem_id: &str, program: &str, comment: &str) -> String {
        match self.rules.iter().find(|r| r.applies(problem_id, comment, program)) {
            Some(rule) => program.replace(&rule.find, &rule.replace),
            None => program.to_string(),
        }
    }
}

impl CompletionBackend for MockEditor {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let (_, program, comment) =
            parse_serialized(request.prompt).map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(self.apply(request.problem_id, &program, &comment))
    }
}
