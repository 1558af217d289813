use std::path::PathBuf;

use ragtuner::components::builtin_registry;
use ragtuner::dsl::{parse_spec, validate_against_registry, Diagnostic, ParseError};

fn malformed(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/malformed").join(name);
    std::fs::read_to_string(path).expect("fixture exists")
}

#[test]
fn each_schema_error_points_at_the_offending_value() {
    let cases = [
        ("missing_name.json", "/name"),
        ("unknown_top_level_key.json", "/optimizer"),
        ("inverted_bounds.json", "/stages/0/params/chunk_size/$tune"),
        ("undeclared_domain.json", "/stages/0/outputs/0"),
        ("duplicate_stage_name.json", "/stages/1/name"),
        ("bad_tune_kind.json", "/stages/0/params/chunk_size/$tune/kind"),
        ("indexed_without_dim.json", "/domains/0"),
        ("negative_budget.json", "/tuner/budget"),
    ];
    for (file, pointer) in cases {
        let err = parse_spec(&malformed(file)).expect_err(file);
        assert!(matches!(err, ParseError::Schema { .. }), "{file}: {err:?}");
        assert_eq!(err.pointer(), pointer, "{file}");
        assert!(err.to_string().starts_with(pointer), "{file}: {err}");
    }
}

#[test]
fn syntax_error_reports_position_and_whole_document_pointer() {
    let err = parse_spec(&malformed("syntax_error.json")).unwrap_err();
    match &err {
        ParseError::Syntax { line, .. } => assert_eq!(*line, 3),
        other => panic!("expected a syntax error, got {other:?}"),
    }
    assert_eq!(err.pointer(), "");
}

#[test]
fn unknown_kind_is_a_registry_diagnostic_with_suggestion() {
    let spec = parse_spec(&malformed("unknown_kind.json")).expect("structurally valid");
    let diags = validate_against_registry(&spec, &builtin_registry());
    assert_eq!(diags.len(), 1);
    match &diags[0] {
        Diagnostic::UnknownComponent { pointer, kind, suggestion } => {
            assert_eq!(pointer, "/stages/0/kind");
            assert_eq!(kind, "chunkr");
            assert_eq!(suggestion.as_deref(), Some("chunker"));
        }
        other => panic!("unexpected diagnostic {other:?}"),
    }
}
