use serde_json::Value;

use super::{Assignment, ParamValue, PipelineSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssignmentError {
    #[error("no value assigned to tunable `{0}`")]
    MissingAssignment(String),
    #[error("value {value} for `{path}` is outside its declared range")]
    OutOfBounds { path: String, value: Value },
    #[error("`{0}` is not a tunable of this spec")]
    UnknownPath(String),
}

/// Every tunable at its declared default.
pub fn default_assignment(spec: &PipelineSpec) -> Assignment {
    let mut a = Assignment::new();
    for t in &spec.tunables {
        a.insert(t.path.clone(), t.default.clone());
    }
    a
}

/// Replaces every tunable marker with its assigned literal. The input spec is
/// left untouched and the result has no tunables.
pub fn apply_assignment(spec: &PipelineSpec, a: &Assignment) -> Result<PipelineSpec, AssignmentError> {
    if let Some(extra) = a.paths().find(|p| spec.tunable(p).is_none()) {
        return Err(AssignmentError::UnknownPath(extra.to_string()));
    }
    for t in &spec.tunables {
        let value = a
            .get(&t.path)
            .ok_or_else(|| AssignmentError::MissingAssignment(t.path.clone()))?;
        if !t.kind.admits(value) {
            return Err(AssignmentError::OutOfBounds { path: t.path.clone(), value: value.clone() });
        }
    }

    let mut out = spec.clone();
    for stage in &mut out.stages {
        for p in stage.params.values_mut() {
            if let ParamValue::Tunable(r) = p {
                let v = a.get(&r.path).expect("checked above").clone();
                *p = ParamValue::Literal(v);
            }
        }
    }
    out.tunables.clear();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_spec;
    use serde_json::json;

    fn spec() -> PipelineSpec {
        parse_spec(
            r#"{"name":"t","domains":[],"stages":[
              {"kind":"chunker","params":{
                "chunk_size":{"$tune":{"kind":"int","low":64,"high":512,"default":128}},
                "overlap_ratio":{"$tune":{"kind":"float","low":0.0,"high":0.5,"default":0.0}}}},
              {"kind":"ppr","params":{"damping":{"$tune":{"kind":"float","low":0,"high":1,"default":0.5}},
                "top_k":5}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_substitute_to_declared_literals() {
        let s = spec();
        let concrete = apply_assignment(&s, &default_assignment(&s)).unwrap();
        assert!(concrete.is_concrete());
        assert_eq!(concrete.stages[0].literal("chunk_size"), Some(&json!(128)));
        assert_eq!(concrete.stages[0].literal("overlap_ratio"), Some(&json!(0.0)));
        assert_eq!(concrete.stages[1].literal("damping"), Some(&json!(0.5)));
        assert_eq!(concrete.stages[1].literal("top_k"), Some(&json!(5)));
        assert_eq!(s.tunables.len(), 3, "input spec untouched");
    }

    #[test]
    fn out_of_bounds_and_missing() {
        let s = spec();
        let mut a = default_assignment(&s);
        a.insert("chunker.chunk_size", json!(600));
        assert_eq!(
            apply_assignment(&s, &a),
            Err(AssignmentError::OutOfBounds { path: "chunker.chunk_size".into(), value: json!(600) })
        );

        let mut a = default_assignment(&s);
        a.0.remove("ppr.damping");
        assert_eq!(
            apply_assignment(&s, &a),
            Err(AssignmentError::MissingAssignment("ppr.damping".into()))
        );

        let mut a = default_assignment(&s);
        a.insert("chunker.chunk_size", json!(100.5));
        assert!(matches!(apply_assignment(&s, &a), Err(AssignmentError::OutOfBounds { .. })));

        let mut a = default_assignment(&s);
        a.insert("nope.x", json!(1));
        assert_eq!(apply_assignment(&s, &a), Err(AssignmentError::UnknownPath("nope.x".into())));
    }

    #[test]
    fn inclusive_bounds() {
        let s = spec();
        let mut a = default_assignment(&s);
        a.insert("chunker.chunk_size", json!(512));
        a.insert("chunker.overlap_ratio", json!(0.5));
        assert!(apply_assignment(&s, &a).is_ok());
    }
}
