use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{BackendError, CompletionBackend, CompletionRequest};

/// Fixture-directory name for a problem id: anything outside
/// `[A-Za-z0-9._-]` becomes `_`.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Deterministic offline backend: call `i` for a problem returns its
/// `i`-th fixture file (sorted by name), cycling.
pub struct MockBackend {
    root: PathBuf,
    state: Mutex<HashMap<String, (Vec<String>, usize)>>,
}

impl MockBackend {
    pub fn new(root: &Path) -> Result<Self, BackendError> {
        if !root.is_dir() {
            return Err(BackendError::Fixture {
                path: root.to_path_buf(),
                message: "not a directory".into(),
            });
        }
        Ok(MockBackend {
            root: root.to_path_buf(),
            state: Mutex::new(HashMap::new()),
        })
    }

    fn load(&self, problem_id: &str) -> Result<Vec<String>, BackendError> {
        let dir = self.root.join(sanitize_id(problem_id));
        if !dir.is_dir() {
            return Err(BackendError::MissingFixture(problem_id.to_string()));
        }
        let fixture_err = |path: &Path, e: std::io::Error| BackendError::Fixture {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| fixture_err(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(BackendError::MissingFixture(problem_id.to_string()));
        }
        files
            .iter()
            .map(|p| fs::read_to_string(p).map_err(|e| fixture_err(p, e)))
            .collect()
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let mut state = self.state.lock().expect("mock state poisoned");
        if !state.contains_key(request.problem_id) {
            let fixtures = self.load(request.problem_id)?;
            state.insert(request.problem_id.to_string(), (fixtures, 0));
        }
        let (fixtures, next) = state.get_mut(request.problem_id).expect("inserted above");
        let text = fixtures[*next % fixtures.len()].clone();
        *next += 1;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(id: &str) -> CompletionRequest<'_> {
        CompletionRequest {
            problem_id: id,
            prompt: "",
            temperature: 0.8,
            max_tokens: 10,
        }
    }

    #[test]
    fn cycles_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("HumanEval_3");
        fs::create_dir(&p).unwrap();
        fs::write(p.join("001.txt"), "b").unwrap();
        fs::write(p.join("000.txt"), "a").unwrap();
        let m = MockBackend::new(dir.path()).unwrap();
        let got: Vec<String> = (0..3).map(|_| m.complete(&req("HumanEval/3")).unwrap()).collect();
        assert_eq!(got, ["a", "b", "a"]);
        let err = m.complete(&req("nope")).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }
}
