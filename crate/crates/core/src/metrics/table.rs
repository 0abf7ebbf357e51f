use std::fmt::Write as _;

use super::{EvalReport, MetricsBlock};

fn block(out: &mut String, title: &str, m: &MetricsBlock) {
    let _ = writeln!(out, "{title} ({} problems)", m.problems);
    let mut header = format!("{:<10}", "");
    for r in &m.rows {
        let _ = write!(header, "{:>10}", format!("pass@{}", r.k));
    }
    for r in &m.rows {
        let _ = write!(header, "{:>9}", format!("sol@{}", r.k));
    }
    let _ = writeln!(out, "{}", header.trim_end());

    let mut base = format!("{:<10}", "base");
    for r in &m.rows {
        let _ = write!(base, "{:>10.2}", r.pass_at_k);
    }
    for r in &m.rows {
        let _ = write!(base, "{:>9}", r.sol_at_k);
    }
    let _ = writeln!(out, "{base}");

    if m.rows.iter().all(|r| r.edit_pass_at_k.is_some()) && !m.rows.is_empty() {
        let mut edited = format!("{:<10}", "edited");
        for r in &m.rows {
            let _ = write!(edited, "{:>10.2}", r.edit_pass_at_k.unwrap_or_default());
        }
        for r in &m.rows {
            let _ = write!(edited, "{:>9}", r.edit_sol_at_k.unwrap_or_default());
        }
        let _ = writeln!(out, "{edited}");

        let mut gain = format!("{:<10}", "gain");
        for r in &m.rows {
            let cell = match r.pass_relative_gain {
                Some(g) => format!("{g:+.2}%"),
                None => "-".to_string(),
            };
            let _ = write!(gain, "{cell:>10}");
        }
        for r in &m.rows {
            let d = r.edit_sol_at_k.unwrap_or_default() as i64 - r.sol_at_k as i64;
            let _ = write!(gain, "{:>9}", format!("{d:+}"));
        }
        let _ = writeln!(out, "{gain}");
    }
}

/// Plain-text rendering of a report: overall block, one block per
/// difficulty, then the comment-class shares.
pub fn render_report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    block(&mut out, "overall", &report.overall);
    if report.per_difficulty.len() > 1 {
        for row in &report.per_difficulty {
            out.push('\n');
            block(&mut out, row.difficulty.as_str(), &row.metrics);
        }
    }
    if !report.comment_distribution.is_empty() {
        out.push_str("\ncomment classes\n");
        for share in &report.comment_distribution {
            let _ = writeln!(out, "{:<32}{:>7}{:>9.2}%", share.class, share.count, share.percent);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn renders_rows() {
        let matrix = OutcomeMatrix {
            rows: vec![
                MatrixRow {
                    problem_id: "a".into(),
                    difficulty: Difficulty::None,
                    base: vec![true, false],
                    edited: Some(vec![true, true]),
                },
                MatrixRow {
                    problem_id: "b".into(),
                    difficulty: Difficulty::None,
                    base: vec![false, false],
                    edited: Some(vec![true, false]),
                },
            ],
        };
        let report = evaluate(&matrix, &[1, 2], Estimator::Prefix, &["pass".into()]).unwrap();
        let text = render_report_table(&report);
        assert!(text.contains("pass@1"), "{text}");
        assert!(text.contains("    50.00"), "{text}");
        assert!(text.contains("   100.00"), "{text}");
        assert!(text.contains("+100.00%"), "{text}");
        assert!(text.contains("pass") && text.contains("100.00%"));
    }
}
