use serde_json::{json, Map, Value};

use super::parse::TUNE_MARKER;
use super::{ParamValue, PipelineSpec, TunableDecl, TunableKind, TunerSettings};

/// Deterministic rendering: keys sorted at every level, two-space indent,
/// tuner block fully expanded. Parsing the output yields an equal spec.
pub fn canonical_form(spec: &PipelineSpec) -> String {
    let value = sorted(to_value(spec));
    let mut text = serde_json::to_string_pretty(&value).expect("spec values serialize");
    text.push('\n');
    text
}

pub(crate) fn to_value(spec: &PipelineSpec) -> Value {
    let mut domains: Vec<Value> = spec
        .domains
        .iter()
        .map(|d| {
            let mut m = Map::new();
            m.insert("name".into(), json!(d.name));
            m.insert("indexed".into(), json!(d.indexed));
            if let Some(dim) = d.dim {
                m.insert("dim".into(), json!(dim));
            }
            Value::Object(m)
        })
        .collect();
    domains.extend(
        spec.relations
            .iter()
            .map(|r| json!({"parent_of": {"parent": r.parent, "child": r.child}})),
    );

    let stages: Vec<Value> = spec
        .stages
        .iter()
        .map(|s| {
            let params: Map<String, Value> = s
                .params
                .iter()
                .map(|(k, p)| {
                    let v = match p {
                        ParamValue::Literal(v) => v.clone(),
                        ParamValue::Tunable(r) => {
                            let decl = spec
                                .tunable(&r.path)
                                .expect("every tunable reference has a declaration");
                            tunable_value(decl)
                        }
                    };
                    (k.clone(), v)
                })
                .collect();
            json!({
                "kind": s.kind,
                "name": s.name,
                "params": params,
                "inputs": s.inputs,
                "outputs": s.outputs,
            })
        })
        .collect();

    let mut root = Map::new();
    root.insert("name".into(), json!(spec.name));
    if let Some(d) = &spec.description {
        root.insert("description".into(), json!(d));
    }
    root.insert("domains".into(), Value::Array(domains));
    root.insert("stages".into(), Value::Array(stages));
    root.insert("tuner".into(), tuner_value(&spec.tuner));
    Value::Object(root)
}

fn tunable_value(decl: &TunableDecl) -> Value {
    let mut body = Map::new();
    body.insert("kind".into(), json!(decl.kind.name()));
    match &decl.kind {
        TunableKind::Float { low, high } => {
            body.insert("low".into(), json!(low));
            body.insert("high".into(), json!(high));
        }
        TunableKind::Int { low, high } => {
            body.insert("low".into(), json!(low));
            body.insert("high".into(), json!(high));
        }
        TunableKind::Categorical { choices } => {
            body.insert("choices".into(), Value::Array(choices.clone()));
        }
    }
    body.insert("default".into(), decl.default.clone());
    json!({ TUNE_MARKER: body })
}

fn tuner_value(t: &TunerSettings) -> Value {
    let mut m = Map::new();
    m.insert("seed".into(), json!(t.seed));
    m.insert("budget".into(), json!(t.budget));
    m.insert("epsilon".into(), json!(t.epsilon));
    if let Some(n) = t.n_init {
        m.insert("n_init".into(), json!(n));
    }
    m.insert("patience".into(), json!(t.patience));
    m.insert("xi".into(), json!(t.xi));
    m.insert("n_candidates".into(), json!(t.n_candidates));
    m.insert("n_local".into(), json!(t.n_local));
    m.insert("local_std".into(), json!(t.local_std));
    m.insert("k".into(), json!(t.k));
    m.insert("weights".into(), json!({"recall": t.weights.recall, "f1": t.weights.f1}));
    if let Some(c) = &t.corpus {
        m.insert("corpus".into(), json!(c));
    }
    Value::Object(m)
}

/// Rebuilds every object with keys inserted in sorted order, so the output
/// is sorted whether or not serde_json preserves insertion order.
fn sorted(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sorted).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_spec;

    const SPEC: &str = r#"{"stages":[{"outputs":["c"],"kind":"chunker",
        "params":{"z":1,"chunk_size":{"$tune":{"kind":"int","low":8,"high":64,"default":16}},
                  "mode":{"$tune":{"kind":"categorical","choices":["bm25","dense"],"default":"dense"}}}}],
        "domains":[{"name":"c","indexed":true,"dim":8},{"name":"e"},{"parent_of":{"parent":"c","child":"e"}}],
        "name":"t"}"#;

    #[test]
    fn round_trip_is_structural_identity() {
        let spec = parse_spec(SPEC).unwrap();
        let text = canonical_form(&spec);
        let again = parse_spec(&text).unwrap();
        assert_eq!(spec, again);
        assert_eq!(text, canonical_form(&again));
    }

    #[test]
    fn keys_are_sorted_with_two_space_indent() {
        let text = canonical_form(&parse_spec(SPEC).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "{");
        assert_eq!(lines[1], "  \"domains\": [");
        let top: Vec<&str> = lines
            .iter()
            .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
            .copied()
            .collect();
        assert_eq!(top.len(), 4);
        assert!(top[0].contains("domains") && top[1].contains("name"));
        assert!(top[2].contains("stages") && top[3].contains("tuner"));
    }
}
