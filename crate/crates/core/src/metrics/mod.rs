//! pass@k, sol@k and their edited counterparts, per difficulty, plus the
//! comment-class histogram.

mod matrix;
mod table;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::Difficulty;

pub use matrix::{build_matrix, candidate_verdicts};
pub use table::render_report_table;

pub const TOP_CLASSES: usize = 10;
pub const OTHER_CLASS: &str = "other";

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("problem {problem} has {available} samples, fewer than k = {k}")]
    NotEnoughSamples {
        problem: String,
        available: usize,
        k: usize,
    },
    #[error("problem {problem}: {base} base candidates in the first {k} but only {edited} edited verdicts")]
    UnpairedEdits {
        problem: String,
        k: usize,
        base: usize,
        edited: usize,
    },
    #[error("no edited population in this matrix")]
    NoEditedPopulation,
    #[error("inconsistent outcome data: {0}")]
    Outcomes(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Base,
    Edited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Any of the first k samples, in sample order.
    #[default]
    Prefix,
    /// The combinatorial estimate over all n samples.
    Unbiased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub problem_id: String,
    pub difficulty: Difficulty,
    /// `base[i]`: base candidate `i` passed every hidden test.
    pub base: Vec<bool>,
    /// `edited[i]`: the edit of base candidate `i` passed every hidden test.
    pub edited: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub rows: Vec<MatrixRow>,
}

impl OutcomeMatrix {
    pub fn has_edited(&self) -> bool {
        self.rows.iter().any(|r| r.edited.is_some())
    }

    fn restricted(&self, difficulty: Difficulty) -> OutcomeMatrix {
        OutcomeMatrix {
            rows: self
                .rows
                .iter()
                .filter(|r| r.difficulty == difficulty)
                .cloned()
                .collect(),
        }
    }

    /// First `k` verdicts of each row for the population.
    fn prefixes(&self, k: usize, population: Population) -> Result<Vec<&[bool]>, MetricsError> {
        if k == 0 {
            return Err(MetricsError::ZeroK);
        }
        self.rows
            .iter()
            .map(|row| {
                if row.base.len() < k {
                    return Err(MetricsError::NotEnoughSamples {
                        problem: row.problem_id.clone(),
                        available: row.base.len(),
                        k,
                    });
                }
                match population {
                    Population::Base => Ok(&row.base[..k]),
                    Population::Edited => {
                        let edited = row.edited.as_ref().ok_or(MetricsError::NoEditedPopulation)?;
                        if edited.len() < k {
                            return Err(MetricsError::UnpairedEdits {
                                problem: row.problem_id.clone(),
                                k,
                                base: k,
                                edited: edited.len(),
                            });
                        }
                        Ok(&edited[..k])
                    }
                }
            })
            .collect()
    }
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Percentage of problems with a passing candidate among the first `k`.
pub fn pass_at_k(matrix: &OutcomeMatrix, k: usize, population: Population) -> Result<f64, MetricsError> {
    let rows = matrix.prefixes(k, population)?;
    if rows.is_empty() {
        return Ok(0.0);
    }
    let solved = rows.iter().filter(|r| r.iter().any(|&v| v)).count();
    Ok(100.0 * solved as f64 / rows.len() as f64)
}

/// Number of passing candidates among the first `k` of every problem.
pub fn sol_at_k(matrix: &OutcomeMatrix, k: usize, population: Population) -> Result<u64, MetricsError> {
    let rows = matrix.prefixes(k, population)?;
    Ok(rows.iter().map(|r| r.iter().filter(|&&v| v).count() as u64).sum())
}

/// `1 - C(n-c, k) / C(n, k)` averaged over problems, as a percentage, where
/// `n` is the row length and `c` its passing count.
pub fn pass_at_k_unbiased(matrix: &OutcomeMatrix, k: usize, population: Population) -> Result<f64, MetricsError> {
    // validates k against every row
    matrix.prefixes(k, population)?;
    if matrix.rows.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for row in &matrix.rows {
        let verdicts = match population {
            Population::Base => &row.base,
            Population::Edited => row.edited.as_ref().ok_or(MetricsError::NoEditedPopulation)?,
        };
        let n = verdicts.len();
        let c = verdicts.iter().filter(|&&v| v).count();
        total += if n - c < k {
            1.0
        } else {
            1.0 - ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product::<f64>()
        };
    }
    Ok(100.0 * total / matrix.rows.len() as f64)
}

fn pass_with(
    matrix: &OutcomeMatrix,
    k: usize,
    population: Population,
    estimator: Estimator,
) -> Result<f64, MetricsError> {
    match estimator {
        Estimator::Prefix => pass_at_k(matrix, k, population),
        Estimator::Unbiased => pass_at_k_unbiased(matrix, k, population),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub pass_at_k: f64,
    pub sol_at_k: u64,
    pub edit_pass_at_k: Option<f64>,
    pub edit_sol_at_k: Option<u64>,
    /// `edit_pass_at_k - pass_at_k`, in percentage points.
    pub pass_delta: Option<f64>,
    /// Relative pass@k gain in percent; absent when pass@k is 0.
    pub pass_relative_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub problems: usize,
    pub rows: Vec<KRow>,
}

fn metrics_block(matrix: &OutcomeMatrix, ks: &[usize], estimator: Estimator) -> Result<MetricsBlock, MetricsError> {
    let edited = matrix.has_edited();
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let pass = pass_with(matrix, k, Population::Base, estimator)?;
        let sol = sol_at_k(matrix, k, Population::Base)?;
        let (edit_pass, edit_sol) = if edited {
            (
                Some(pass_with(matrix, k, Population::Edited, estimator)?),
                Some(sol_at_k(matrix, k, Population::Edited)?),
            )
        } else {
            (None, None)
        };
        rows.push(KRow {
            k,
            pass_at_k: round2(pass),
            sol_at_k: sol,
            edit_pass_at_k: edit_pass.map(round2),
            edit_sol_at_k: edit_sol,
            pass_delta: edit_pass.map(|e| round2(e - pass)),
            pass_relative_gain: edit_pass
                .filter(|_| pass > 0.0)
                .map(|e| round2(100.0 * (e - pass) / pass)),
        });
    }
    Ok(MetricsBlock {
        problems: matrix.rows.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub difficulty: Difficulty,
    pub metrics: MetricsBlock,
}

/// Metrics restricted to each difficulty present in the matrix.
pub fn difficulty_breakdown(
    matrix: &OutcomeMatrix,
    ks: &[usize],
    estimator: Estimator,
) -> Result<Vec<DifficultyRow>, MetricsError> {
    Difficulty::ALL
        .into_iter()
        .filter(|d| matrix.rows.iter().any(|r| r.difficulty == *d))
        .map(|d| {
            Ok(DifficultyRow {
                difficulty: d,
                metrics: metrics_block(&matrix.restricted(d), ks, estimator)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub class: String,
    pub count: usize,
    pub percent: f64,
}

/// The ten most frequent classes (ties by name) and an `other` bucket for
/// the rest, as percentages of all comments.
pub fn comment_distribution<'a>(classes: impl IntoIterator<Item = &'a str>) -> Vec<ClassShare> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0usize;
    for c in classes {
        *counts.entry(c).or_default() += 1;
        total += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let share = |count: usize| round2(100.0 * count as f64 / total as f64);
    let mut out: Vec<ClassShare> = ranked
        .iter()
        .take(TOP_CLASSES)
        .map(|&(class, count)| ClassShare {
            class: class.to_string(),
            count,
            percent: share(count),
        })
        .collect();
    let rest: usize = ranked.iter().skip(TOP_CLASSES).map(|r| r.1).sum();
    if rest > 0 {
        out.push(ClassShare {
            class: OTHER_CLASS.to_string(),
            count: rest,
            percent: share(rest),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub estimator: Estimator,
    pub overall: MetricsBlock,
    pub per_difficulty: Vec<DifficultyRow>,
    pub comment_distribution: Vec<ClassShare>,
    /// Run facts such as call counts; empty outside pipeline runs.
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

pub fn evaluate(
    matrix: &OutcomeMatrix,
    ks: &[usize],
    estimator: Estimator,
    comment_classes: &[String],
) -> Result<EvalReport, MetricsError> {
    Ok(EvalReport {
        ks: ks.to_vec(),
        estimator,
        overall: metrics_block(matrix, ks, estimator)?,
        per_difficulty: difficulty_breakdown(matrix, ks, estimator)?,
        comment_distribution: comment_distribution(comment_classes.iter().map(String::as_str)),
        meta: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, d: Difficulty, base: &[bool], edited: Option<&[bool]>) -> MatrixRow {
        MatrixRow {
            problem_id: id.into(),
            difficulty: d,
            base: base.to_vec(),
            edited: edited.map(<[bool]>::to_vec),
        }
    }

    fn m(rows: Vec<MatrixRow>) -> OutcomeMatrix {
        OutcomeMatrix { rows }
    }

    const T: bool = true;
    const F: bool = false;

    #[test]
    fn hand_counts() {
        let x = m(vec![
            row("a", Difficulty::None, &[T, F], None),
            row("b", Difficulty::None, &[F, T], None),
            row("c", Difficulty::None, &[F, F], None),
            row("d", Difficulty::None, &[F, F], None),
        ]);
        assert_eq!(pass_at_k(&x, 1, Population::Base).unwrap(), 25.0);
        assert_eq!(pass_at_k(&x, 2, Population::Base).unwrap(), 50.0);
        assert!(matches!(
            pass_at_k(&x, 3, Population::Base),
            Err(MetricsError::NotEnoughSamples { .. })
        ));
        assert!(matches!(pass_at_k(&x, 0, Population::Base), Err(MetricsError::ZeroK)));
        let one = m(vec![row("a", Difficulty::None, &[T, F, T], None)]);
        assert_eq!(sol_at_k(&one, 3, Population::Base).unwrap(), 2);
        let all = m((0..598)
            .map(|i| row(&i.to_string(), Difficulty::None, &[T; 10], None))
            .collect());
        assert_eq!(sol_at_k(&all, 10, Population::Base).unwrap(), 5980);
        let none = m(vec![row("a", Difficulty::None, &[F; 10], None)]);
        for k in 1..=10 {
            assert_eq!(pass_at_k(&none, k, Population::Base).unwrap(), 0.0);
        }
    }

    #[test]
    fn pairing_is_enforced() {
        let x = m(vec![row("a", Difficulty::None, &[T, F], Some(&[T]))]);
        assert_eq!(pass_at_k(&x, 1, Population::Edited).unwrap(), 100.0);
        assert!(matches!(
            pass_at_k(&x, 2, Population::Edited),
            Err(MetricsError::UnpairedEdits { .. })
        ));
        let y = m(vec![row("a", Difficulty::None, &[T], None)]);
        assert!(matches!(
            sol_at_k(&y, 1, Population::Edited),
            Err(MetricsError::NoEditedPopulation)
        ));
    }

    #[test]
    fn unbiased_estimator() {
        let x = m(vec![row("a", Difficulty::None, &[T, F, F, F], None)]);
        assert!((pass_at_k_unbiased(&x, 1, Population::Base).unwrap() - 25.0).abs() < 1e-9);
        assert!((pass_at_k_unbiased(&x, 2, Population::Base).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(pass_at_k_unbiased(&x, 4, Population::Base).unwrap(), 100.0);
    }

    #[test]
    fn breakdown_rows() {
        let only_intro = m(vec![row("a", Difficulty::Introductory, &[T], None)]);
        let b = difficulty_breakdown(&only_intro, &[1], Estimator::Prefix).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].difficulty, Difficulty::Introductory);

        let mixed = m(vec![
            row("a", Difficulty::Introductory, &[T, T], Some(&[T, T])),
            row("b", Difficulty::Interview, &[F, T], Some(&[T, T])),
            row("c", Difficulty::Interview, &[F, F], Some(&[F, T])),
            row("d", Difficulty::Competition, &[F, F], Some(&[F, F])),
        ]);
        let b = difficulty_breakdown(&mixed, &[1, 2], Estimator::Prefix).unwrap();
        let total: u64 = b.iter().map(|r| r.metrics.rows[1].sol_at_k).sum();
        assert_eq!(total, sol_at_k(&mixed, 2, Population::Base).unwrap());
        let interview = &b[1].metrics.rows[0];
        assert_eq!((interview.pass_at_k, interview.edit_pass_at_k), (0.0, Some(50.0)));
        assert_eq!(interview.pass_relative_gain, None);
        assert_eq!(interview.pass_delta, Some(50.0));
    }

    #[test]
    fn distribution() {
        let mut classes = vec!["pass"; 5];
        classes.extend(["wrong_answer"; 3]);
        classes.extend(["error:SyntaxError"; 2]);
        let d = comment_distribution(classes);
        let got: Vec<_> = d.iter().map(|s| (s.class.as_str(), s.percent)).collect();
        assert_eq!(
            got,
            [("pass", 50.0), ("wrong_answer", 30.0), ("error:SyntaxError", 20.0)]
        );

        let many: Vec<String> = (0..12).map(|i| format!("error:E{i:02}")).collect();
        let d = comment_distribution(many.iter().map(String::as_str));
        assert_eq!(d.len(), 11);
        assert_eq!(d[10].class, "other");
        assert_eq!(d[10].count, 2);
        assert!(comment_distribution(std::iter::empty()).is_empty());
    }
}
