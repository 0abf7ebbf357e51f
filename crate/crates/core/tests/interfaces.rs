//! Record formats read by tools outside this workspace.

use selfedit_core::dataset::{EditorExample, Provenance, Target};
use selfedit_core::editor::{
    parse_serialized, serialize_input, CharProxy, DEFAULT_INPUT_BUDGET, DEFAULT_OUTPUT_BUDGET,
};

#[test]
fn editor_dataset_line_layout() {
    let ex = EditorExample {
        problem_id: "p1".into(),
        model_name: "lm".into(),
        description: "Add two numbers.".into(),
        source_program: "print(a+b+1)".into(),
        comment: "Wrong answer on the example test case.".into(),
        comment_class: "wrong_answer".into(),
        targets: vec![
            Target {
                program: "print(a+b)".into(),
                provenance: Provenance::GeneratedPassing,
            },
            Target {
                program: "print(b+a)".into(),
                provenance: Provenance::OriginalGt,
            },
        ],
    };
    let line = serde_json::to_string(&ex).unwrap();
    assert_eq!(
        line,
        r#"{"problem_id":"p1","model_name":"lm","description":"Add two numbers.","source_program":"print(a+b+1)","comment":"Wrong answer on the example test case.","comment_class":"wrong_answer","targets":[{"program":"print(a+b)","provenance":"generated-passing"},{"program":"print(b+a)","provenance":"original-gt"}]}"#
    );
    let back: EditorExample = serde_json::from_str(&line).unwrap();
    assert_eq!(back, ex);
    let extra = line.replacen("{", r#"{"weight":1,"#, 1);
    assert!(serde_json::from_str::<EditorExample>(&extra).is_err());
}

#[test]
fn editor_input_text() {
    let input = serialize_input(
        "desc",
        "x=1",
        "Pass the example test case.",
        DEFAULT_INPUT_BUDGET,
        DEFAULT_OUTPUT_BUDGET,
        &CharProxy,
    )
    .unwrap();
    assert_eq!(
        input.serialized,
        "[SOS]desc[CODE]x=1[CMNT]Pass the example test case.[EOS]"
    );
    let (n, s, c) = parse_serialized(&input.serialized).unwrap();
    assert_eq!(
        (n.as_str(), s.as_str(), c.as_str()),
        ("desc", "x=1", "Pass the example test case.")
    );
}
