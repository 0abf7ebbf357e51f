//! The editor's input format: `[SOS]N[CODE]S[CMNT]C[EOS]`, with literal
//! marker strings in N, S and C escaped by backslashes.

use super::EditorError;
use crate::comment::truncate_middle;

pub const SOS: &str = "[SOS]";
pub const CODE: &str = "[CODE]";
pub const CMNT: &str = "[CMNT]";
pub const EOS: &str = "[EOS]";
pub const MARKERS: [&str; 4] = [SOS, CODE, CMNT, EOS];

pub const DEFAULT_INPUT_BUDGET: usize = 1024;
pub const DEFAULT_OUTPUT_BUDGET: usize = 512;
pub const CHARS_PER_TOKEN: usize = 4;

/// Token counting for budget enforcement.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;

    /// Longest prefix of `text` that fits in `budget` tokens.
    fn truncate(&self, text: &str, budget: usize) -> String {
        if self.count(text) <= budget {
            return text.to_string();
        }
        let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
        let (mut lo, mut hi) = (0, bounds.len() - 1);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.count(&text[..bounds[mid]]) <= budget {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        text[..bounds[lo]].to_string()
    }
}

/// `CHARS_PER_TOKEN` characters count as one token.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharProxy;

impl Tokenizer for CharProxy {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(CHARS_PER_TOKEN)
    }

    fn truncate(&self, text: &str, budget: usize) -> String {
        text.chars().take(budget * CHARS_PER_TOKEN).collect()
    }
}

fn marker_at(text: &str, pos: usize) -> Option<&'static str> {
    MARKERS.into_iter().find(|m| text[pos..].starts_with(m))
}

/// Escapes literal markers: a run of `b` backslashes before a marker becomes
/// `2b + 1`, and a run at the very end becomes `2b`, so a structural marker
/// that follows is always preceded by an even count.
pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run = 0usize;
    for (i, ch) in text.char_indices() {
        if ch == '\\' {
            run += 1;
            continue;
        }
        let literal_marker = ch == '[' && marker_at(text, i).is_some();
        let n = if literal_marker { 2 * run + 1 } else { run };
        out.extend(std::iter::repeat_n('\\', n));
        run = 0;
        out.push(ch);
    }
    out.extend(std::iter::repeat_n('\\', 2 * run));
    out
}

/// Splits escaped text at unescaped markers and unescapes the pieces.
/// Returns the leading piece and `(marker, piece)` for every marker.
fn split_unescaped(text: &str) -> (String, Vec<(&'static str, String)>) {
    let mut pieces = Vec::new();
    let mut current = String::new();
    let mut lead: Option<String> = None;
    let mut pending_marker: Option<&'static str> = None;
    let mut run = 0usize;
    let mut i = 0;
    while i < text.len() {
        let ch = text[i..].chars().next().expect("in bounds");
        if ch == '\\' {
            run += 1;
            i += 1;
            continue;
        }
        if ch == '[' {
            if let Some(m) = marker_at(text, i) {
                current.extend(std::iter::repeat_n('\\', run / 2));
                if run % 2 == 1 {
                    current.push_str(m);
                } else {
                    let piece = std::mem::take(&mut current);
                    match pending_marker.replace(m) {
                        None => lead = Some(piece),
                        Some(prev) => pieces.push((prev, piece)),
                    }
                }
                run = 0;
                i += m.len();
                continue;
            }
        }
        current.extend(std::iter::repeat_n('\\', run));
        run = 0;
        current.push(ch);
        i += ch.len_utf8();
    }
    current.extend(std::iter::repeat_n('\\', run / 2));
    match pending_marker {
        None => lead = Some(current),
        Some(prev) => pieces.push((prev, current)),
    }
    (lead.unwrap_or_default(), pieces)
}

/// Inverse of `escape` for text without structural markers.
pub fn unescape(text: &str) -> String {
    let (lead, pieces) = split_unescaped(text);
    let mut out = lead;
    for (m, piece) in pieces {
        out.push_str(m);
        out.push_str(&piece);
    }
    out
}

/// Recovers `(N, S, C)` from a serialized input.
pub fn parse_serialized(serialized: &str) -> Result<(String, String, String), EditorError> {
    let (lead, pieces) = split_unescaped(serialized);
    let shape: Vec<&str> = pieces.iter().map(|(m, _)| *m).collect();
    if !lead.is_empty() || shape != MARKERS || !pieces[3].1.is_empty() {
        return Err(EditorError::Parse(format!("unexpected marker layout {shape:?}")));
    }
    let mut it = pieces.into_iter().map(|(_, p)| p);
    let n = it.next().unwrap_or_default();
    let s = it.next().unwrap_or_default();
    let c = it.next().unwrap_or_default();
    Ok((n, s, c))
}

pub(crate) fn assemble(n: &str, s: &str, c: &str) -> String {
    format!("{SOS}{}{CODE}{}{CMNT}{}{EOS}", escape(n), escape(s), escape(c))
}

fn tail_chars(text: &str, keep: usize) -> &str {
    let len = text.chars().count();
    match text.char_indices().nth(len - keep.min(len)) {
        Some((i, _)) => &text[i..],
        None => "",
    }
}

/// Largest `x` in `0..=max` with `fits(x)`, assuming `fits` is monotone.
fn largest_fitting(max: usize, fits: impl Fn(usize) -> bool) -> Option<usize> {
    if !fits(0) {
        return None;
    }
    let (mut lo, mut hi) = (0, max);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some(lo)
}

/// Fits `(N, S, C)` into `budget` tokens: first drops the head of N, then
/// cuts the middle of S. C is never shortened.
pub(crate) fn fit_to_budget(
    n: &str,
    s: &str,
    c: &str,
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<(String, String, String), EditorError> {
    let fits = |n: &str, s: &str| tokenizer.count(&assemble(n, s, c)) <= budget;
    if fits(n, s) {
        return Ok((n.to_string(), s.to_string(), c.to_string()));
    }
    let n_len = n.chars().count();
    if let Some(keep) = largest_fitting(n_len, |keep| fits(tail_chars(n, keep), s)) {
        return Ok((tail_chars(n, keep).to_string(), s.to_string(), c.to_string()));
    }
    let s_len = s.chars().count();
    match largest_fitting(s_len, |cap| fits("", &truncate_middle(s, cap))) {
        Some(cap) => Ok((String::new(), truncate_middle(s, cap), c.to_string())),
        None => Err(EditorError::CommentOverBudget {
            tokens: tokenizer.count(&assemble("", "", c)),
            budget,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn escaping_examples() {
        assert_eq!(escape("a[CODE]b"), "a\\[CODE]b");
        assert_eq!(escape("a\\[EOS]"), "a\\\\\\[EOS]");
        assert_eq!(escape("ends\\"), "ends\\\\");
        assert_eq!(escape("x\\y [NOPE]"), "x\\y [NOPE]");
        for s in ["a[CODE]b", "a\\[EOS]", "ends\\", "\\\\", "[SOS][SOS]"] {
            assert_eq!(unescape(&escape(s)), s);
        }
    }

    #[test]
    fn parse_round_trip() {
        let ser = assemble("desc [CMNT]", "x = '\\'", "Pass the example test case.\\");
        let (n, s, c) = parse_serialized(&ser).unwrap();
        assert_eq!(
            (n.as_str(), s.as_str(), c.as_str()),
            ("desc [CMNT]", "x = '\\'", "Pass the example test case.\\")
        );
        assert!(parse_serialized("[SOS]a[CMNT]b[CODE]c[EOS]").is_err());
        assert!(parse_serialized("[SOS]a[CODE]b[CMNT]c").is_err());
    }

    #[test]
    fn budget_drops_description_head_first() {
        let n = format!("{}TAIL", "h".repeat(400));
        let (tn, ts, tc) = fit_to_budget(&n, "x=1", "C", 40, &CharProxy).unwrap();
        assert!(tn.ends_with("TAIL"));
        assert_eq!((ts.as_str(), tc.as_str()), ("x=1", "C"));
        let total = assemble(&tn, &ts, &tc).chars().count();
        assert!(total <= 160 && total > 156, "{total}");
    }

    #[test]
    fn budget_then_cuts_program_middle() {
        let s = format!("HEAD{}TAIL", "s".repeat(400));
        let (tn, ts, tc) = fit_to_budget("desc", &s, "comment", 30, &CharProxy).unwrap();
        assert_eq!(tn, "");
        assert!(ts.starts_with("HEAD") && ts.ends_with("TAIL") && ts.contains("..."));
        assert_eq!(tc, "comment");
        assert!(CharProxy.count(&assemble(&tn, &ts, &tc)) <= 30);
        let err = fit_to_budget("", "x", &"c".repeat(200), 10, &CharProxy).unwrap_err();
        assert!(matches!(err, EditorError::CommentOverBudget { .. }));
    }

    #[test]
    fn output_truncation() {
        assert_eq!(CharProxy.truncate("abcdefghij", 2), "abcdefgh");
        struct Words;
        impl Tokenizer for Words {
            fn count(&self, t: &str) -> usize {
                t.split_whitespace().count()
            }
        }
        assert_eq!(Words.truncate("a b c d", 2), "a b ");
    }

    fn marker_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("[SOS]".to_string()),
                Just("[CODE]".to_string()),
                Just("[CMNT]".to_string()),
                Just("[EOS]".to_string()),
                Just("\\".to_string()),
                Just("[".to_string()),
                "[a-z \\n]{0,5}",
            ],
            0..12,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn markers_survive_round_trip(n in marker_text(), s in marker_text(), c in marker_text(), budget in 8usize..80) {
            if let Ok((tn, ts, tc)) = fit_to_budget(&n, &s, &c, budget, &CharProxy) {
                let ser = assemble(&tn, &ts, &tc);
                prop_assert!(CharProxy.count(&ser) <= budget);
                prop_assert!(ser.chars().count() <= budget * CHARS_PER_TOKEN);
                prop_assert_eq!(&tc, &c);
                let parsed = parse_serialized(&ser).unwrap();
                prop_assert_eq!(parsed, (tn, ts, tc));
            }
        }

        #[test]
        fn escape_is_invertible(t in marker_text()) {
            prop_assert_eq!(unescape(&escape(&t)), t);
        }
    }
}
