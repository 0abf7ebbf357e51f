/// Program text from a completion: the body of the first fenced block when
/// there is one, else the completion verbatim.
pub fn extract_code(completion: &str) -> String {
    let Some(start) = completion.find("```") else {
        return completion.to_string();
    };
    let after = &completion[start + 3..];
    // the rest of the fence line is a language tag
    let body = match after.find('\n') {
        Some(nl) => &after[nl + 1..],
        None => return String::new(),
    };
    let body = match body.find("```") {
        Some(end) => &body[..end],
        None => body,
    };
    body.to_string()
}
