use std::collections::{BTreeMap, HashMap, HashSet};

use super::{MatrixRow, MetricsError, OutcomeMatrix};
use crate::generator::Candidate;
use crate::sandbox::OutcomeRecord;
use crate::store::Corpus;

/// Whether each candidate passed all hidden tests of its problem.
///
/// A candidate with a non-passing outcome fails even if later tests are
/// missing (fail-fast runs); one whose outcomes all pass but do not cover
/// every hidden test is an error.
pub fn candidate_verdicts(
    corpus: &Corpus,
    candidates: &[Candidate],
    outcomes: &[OutcomeRecord],
) -> crate::Result<HashMap<String, bool>> {
    let by_id: HashMap<&str, &Candidate> = candidates.iter().map(|c| (c.candidate_id.as_str(), c)).collect();
    if by_id.len() != candidates.len() {
        return Err(MetricsError::Outcomes("duplicate candidate ids".into()).into());
    }
    let mut grouped: HashMap<&str, Vec<&OutcomeRecord>> = HashMap::new();
    for rec in outcomes {
        if !by_id.contains_key(rec.candidate_id.as_str()) {
            return Err(MetricsError::Outcomes(format!("outcome for unknown candidate {}", rec.candidate_id)).into());
        }
        grouped.entry(rec.candidate_id.as_str()).or_default().push(rec);
    }
    let mut verdicts = HashMap::with_capacity(candidates.len());
    for cand in candidates {
        let problem = corpus.get(&cand.problem_id)?;
        let recs = grouped
            .get(cand.candidate_id.as_str())
            .map(Vec::as_slice)
            .unwrap_or_default();
        if recs.is_empty() {
            return Err(MetricsError::Outcomes(format!("no outcomes for candidate {}", cand.candidate_id)).into());
        }
        let labels: HashSet<&str> = recs.iter().map(|r| r.outcome.test_label.as_str()).collect();
        if labels.len() != recs.len() {
            return Err(MetricsError::Outcomes(format!("repeated test labels for {}", cand.candidate_id)).into());
        }
        let verdict = if recs.iter().any(|r| !r.outcome.is_passed()) {
            false
        } else if recs.len() == problem.hidden_tests.len() {
            true
        } else {
            return Err(MetricsError::Outcomes(format!(
                "candidate {} has {} passing outcomes for {} hidden tests",
                cand.candidate_id,
                recs.len(),
                problem.hidden_tests.len()
            ))
            .into());
        };
        verdicts.insert(cand.candidate_id.clone(), verdict);
    }
    Ok(verdicts)
}

/// One row per corpus problem, in corpus order. For the edited population
/// the latest round of each sample is used.
pub fn build_matrix(
    corpus: &Corpus,
    base: (&[Candidate], &[OutcomeRecord]),
    edited: Option<(&[Candidate], &[OutcomeRecord])>,
) -> crate::Result<OutcomeMatrix> {
    let base_verdicts = candidate_verdicts(corpus, base.0, base.1)?;
    let mut base_rows: HashMap<&str, BTreeMap<usize, bool>> = HashMap::new();
    for c in base.0 {
        base_rows
            .entry(c.problem_id.as_str())
            .or_default()
            .insert(c.sample_index, base_verdicts[&c.candidate_id]);
    }
    let mut edited_rows: HashMap<&str, BTreeMap<usize, (u32, bool)>> = HashMap::new();
    if let Some((cands, outs)) = edited {
        let verdicts = candidate_verdicts(corpus, cands, outs)?;
        for c in cands {
            let slot = edited_rows.entry(c.problem_id.as_str()).or_default();
            let v = (c.edit_round, verdicts[&c.candidate_id]);
            match slot.get(&c.sample_index) {
                Some(&(round, _)) if round >= c.edit_round => {}
                _ => {
                    slot.insert(c.sample_index, v);
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(corpus.len());
    for problem in corpus.problems() {
        let samples = base_rows
            .get(problem.id.as_str())
            .ok_or_else(|| MetricsError::Outcomes(format!("no base candidates for problem {}", problem.id)))?;
        if samples.keys().copied().ne(0..samples.len()) {
            return Err(MetricsError::Outcomes(format!("problem {} has gaps in sample indices", problem.id)).into());
        }
        let edited = edited.map(|_| {
            let slot = edited_rows.get(problem.id.as_str());
            (0..samples.len())
                .map_while(|i| slot.and_then(|s| s.get(&i)).map(|v| v.1))
                .collect()
        });
        rows.push(MatrixRow {
            problem_id: problem.id.clone(),
            difficulty: problem.difficulty,
            base: samples.values().copied().collect(),
            edited,
        });
    }
    Ok(OutcomeMatrix { rows })
}
