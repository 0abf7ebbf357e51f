use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Difficulty, Problem, Suite};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyCounts {
    pub introductory: usize,
    pub interview: usize,
    pub competition: usize,
    pub none: usize,
}

impl DifficultyCounts {
    fn bump(&mut self, d: Difficulty) {
        match d {
            Difficulty::Introductory => self.introductory += 1,
            Difficulty::Interview => self.interview += 1,
            Difficulty::Competition => self.competition += 1,
            Difficulty::None => self.none += 1,
        }
    }

    pub fn get(&self, d: Difficulty) -> usize {
        match d {
            Difficulty::Introductory => self.introductory,
            Difficulty::Interview => self.interview,
            Difficulty::Competition => self.competition,
            Difficulty::None => self.none,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// `None` when the corpus mixes suites (or is empty).
    pub suite: Option<Suite>,
    pub problem_count: usize,
    pub total_hidden_tests: usize,
    pub mean_hidden_tests: f64,
    pub per_difficulty: DifficultyCounts,
}

/// Problem count, mean hidden tests per problem and difficulty counts.
///
/// A test-program hidden test counts as one test per `assert` it contains.
pub fn corpus_stats(problems: &[Problem]) -> CorpusStats {
    let mut per_difficulty = DifficultyCounts::default();
    let mut total = 0usize;
    let mut suite = problems.first().map(|p| p.suite);
    for p in problems {
        per_difficulty.bump(p.difficulty);
        total += p.hidden_check_count();
        if suite != Some(p.suite) {
            suite = None;
        }
    }
    let mean = if problems.is_empty() {
        0.0
    } else {
        total as f64 / problems.len() as f64
    };
    CorpusStats {
        suite,
        problem_count: problems.len(),
        total_hidden_tests: total,
        mean_hidden_tests: mean,
        per_difficulty,
    }
}

pub fn render_stats_table(stats: &CorpusStats) -> String {
    let suite = stats.suite.map_or("mixed", Suite::as_str);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:<13} {:>9} {:>13}",
        "Suite", "Difficulty", "Problems", "Hidden Tests"
    );
    let _ = writeln!(
        out,
        "{:<14} {:<13} {:>9} {:>13.2}",
        suite, "all", stats.problem_count, stats.mean_hidden_tests
    );
    for d in Difficulty::ALL {
        let n = stats.per_difficulty.get(d);
        if n > 0 && n != stats.problem_count {
            let _ = writeln!(out, "{:<14} {:<13} {:>9} {:>13}", "", d.as_str(), n, "");
        }
    }
    out
}
