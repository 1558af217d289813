use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::{
    pointer_segment, DomainDecl, ObjectiveWeights, ParamValue, ParentRelation, PipelineSpec,
    StageSpec, TunableDecl, TunableKind, TunableRef, TunerSettings,
};

pub(crate) const TUNE_MARKER: &str = "$tune";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("{pointer}: duplicate tunable path `{path}`")]
    DuplicateTunablePath { path: String, pointer: String },
}

impl ParseError {
    /// JSON pointer of the offending value. Syntax errors point at the
    /// whole document (`""`) and carry a line and column instead.
    pub fn pointer(&self) -> &str {
        match self {
            ParseError::Syntax { .. } => "",
            ParseError::Schema { pointer, .. } | ParseError::DuplicateTunablePath { pointer, .. } => pointer,
        }
    }
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Schema { pointer: pointer.into(), message: message.into() }
}

fn child(pointer: &str, seg: impl std::fmt::Display) -> String {
    format!("{pointer}/{}", pointer_segment(&seg.to_string()))
}

/// Parses and structurally validates a pipeline file.
pub fn parse_spec(text: &str) -> Result<PipelineSpec, ParseError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    parse_value(&root)
}

pub(crate) fn parse_value(root: &Value) -> Result<PipelineSpec, ParseError> {
    let obj = as_object(root, "")?;
    check_keys(obj, "", &["name", "description", "domains", "stages", "tuner"])?;

    let name = required_str(obj, "", "name")?.to_string();
    if name.trim().is_empty() {
        return Err(schema("/name", "must be nonempty"));
    }
    let description = match obj.get("description") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(schema("/description", "expected a string")),
    };

    let (domains, relations) = parse_domains(required(obj, "", "domains")?)?;
    let (stages, tunables) = parse_stages(required(obj, "", "stages")?, &domains)?;
    let tuner = match obj.get("tuner") {
        None => TunerSettings::default(),
        Some(v) => parse_tuner(v, "/tuner")?,
    };

    Ok(PipelineSpec { name, description, domains, relations, stages, tunables, tuner })
}

fn parse_domains(value: &Value) -> Result<(Vec<DomainDecl>, Vec<ParentRelation>), ParseError> {
    let list = as_array(value, "/domains")?;
    let mut domains: Vec<DomainDecl> = Vec::new();
    let mut relations = Vec::new();
    let mut pending: Vec<(String, ParentRelation)> = Vec::new();

    for (i, entry) in list.iter().enumerate() {
        let ptr = child("/domains", i);
        let obj = as_object(entry, &ptr)?;
        if let Some(rel) = obj.get("parent_of") {
            check_keys(obj, &ptr, &["parent_of"])?;
            let rptr = child(&ptr, "parent_of");
            let robj = as_object(rel, &rptr)?;
            check_keys(robj, &rptr, &["parent", "child"])?;
            let parent = required_str(robj, &rptr, "parent")?.to_string();
            let child_name = required_str(robj, &rptr, "child")?.to_string();
            if parent == child_name {
                return Err(schema(rptr, "a domain cannot be its own parent"));
            }
            pending.push((rptr, ParentRelation { parent, child: child_name }));
            continue;
        }
        check_keys(obj, &ptr, &["name", "indexed", "dim"])?;
        let name = required_str(obj, &ptr, "name")?.to_string();
        if name.is_empty() {
            return Err(schema(child(&ptr, "name"), "must be nonempty"));
        }
        if domains.iter().any(|d| d.name == name) {
            return Err(schema(child(&ptr, "name"), format!("duplicate domain `{name}`")));
        }
        let indexed = match obj.get("indexed") {
            None => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err(schema(child(&ptr, "indexed"), "expected a boolean")),
        };
        let dim = match obj.get("dim") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_u64() {
                Some(d) if d > 0 => Some(d as usize),
                _ => return Err(schema(child(&ptr, "dim"), "expected a positive integer")),
            },
        };
        if indexed && dim.is_none() {
            return Err(schema(ptr, format!("indexed domain `{name}` needs `dim`")));
        }
        domains.push(DomainDecl { name, indexed, dim });
    }

    for (ptr, rel) in pending {
        for (field, d) in [("parent", &rel.parent), ("child", &rel.child)] {
            if !domains.iter().any(|x| &x.name == d) {
                return Err(schema(child(&ptr, field), format!("undeclared domain `{d}`")));
            }
        }
        if relations.contains(&rel) {
            return Err(schema(ptr, "duplicate relation"));
        }
        relations.push(rel);
    }
    Ok((domains, relations))
}

fn parse_stages(
    value: &Value,
    domains: &[DomainDecl],
) -> Result<(Vec<StageSpec>, Vec<TunableDecl>), ParseError> {
    let list = as_array(value, "/stages")?;
    if list.is_empty() {
        return Err(schema("/stages", "at least one stage is required"));
    }
    let mut stages: Vec<StageSpec> = Vec::new();
    let mut tunables: Vec<TunableDecl> = Vec::new();
    let mut names = BTreeSet::new();

    for (i, entry) in list.iter().enumerate() {
        let ptr = child("/stages", i);
        let obj = as_object(entry, &ptr)?;
        check_keys(obj, &ptr, &["kind", "name", "params", "inputs", "outputs"])?;
        let kind = required_str(obj, &ptr, "kind")?.to_string();
        if kind.trim().is_empty() {
            return Err(schema(child(&ptr, "kind"), "must be nonempty"));
        }
        let name = match obj.get("name") {
            None => kind.clone(),
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => return Err(schema(child(&ptr, "name"), "expected a nonempty string")),
        };
        if name.contains('.') {
            return Err(schema(child(&ptr, "name"), "stage names may not contain `.`"));
        }

        let mut params = BTreeMap::new();
        if let Some(pv) = obj.get("params") {
            let pptr = child(&ptr, "params");
            for (key, raw) in as_object(pv, &pptr)? {
                let kptr = child(&pptr, key);
                let value = match tune_marker(raw) {
                    Some(body) => {
                        let path = format!("{name}.{key}");
                        let decl = parse_tunable(body, &child(&kptr, TUNE_MARKER), &path)?;
                        if tunables.iter().any(|t| t.path == path) {
                            return Err(ParseError::DuplicateTunablePath { path, pointer: kptr });
                        }
                        tunables.push(decl);
                        ParamValue::Tunable(TunableRef { path })
                    }
                    None => {
                        if let Some(p) = find_nested_marker(raw, &kptr) {
                            return Err(schema(
                                p,
                                "tunable markers are only allowed as a whole parameter value",
                            ));
                        }
                        ParamValue::Literal(raw.clone())
                    }
                };
                params.insert(key.clone(), value);
            }
        }

        if !names.insert(name.clone()) {
            return Err(schema(child(&ptr, "name"), format!("duplicate stage name `{name}`")));
        }

        let inputs = domain_list(obj, &ptr, "inputs", domains)?;
        let outputs = domain_list(obj, &ptr, "outputs", domains)?;
        stages.push(StageSpec { kind, name, params, inputs, outputs });
    }

    // Declared order must respect producer -> consumer dependencies.
    for (i, stage) in stages.iter().enumerate() {
        for (j, input) in stage.inputs.iter().enumerate() {
            if let Some(later) = stages[i + 1..].iter().find(|s| s.outputs.contains(input)) {
                return Err(schema(
                    child(&child(&child("/stages", i), "inputs"), j),
                    format!("domain `{input}` is produced by later stage `{}`", later.name),
                ));
            }
        }
    }
    Ok((stages, tunables))
}

fn domain_list(
    obj: &Map<String, Value>,
    ptr: &str,
    key: &str,
    domains: &[DomainDecl],
) -> Result<Vec<String>, ParseError> {
    let Some(v) = obj.get(key) else {
        return Ok(Vec::new());
    };
    let lptr = child(ptr, key);
    let mut out = Vec::new();
    for (j, item) in as_array(v, &lptr)?.iter().enumerate() {
        let iptr = child(&lptr, j);
        let name = item
            .as_str()
            .ok_or_else(|| schema(iptr.clone(), "expected a domain name"))?;
        if !domains.iter().any(|d| d.name == name) {
            return Err(schema(iptr, format!("undeclared domain `{name}`")));
        }
        if out.iter().any(|d| d == name) {
            return Err(schema(iptr, format!("domain `{name}` listed twice")));
        }
        out.push(name.to_string());
    }
    Ok(out)
}

fn tune_marker(v: &Value) -> Option<&Value> {
    match v {
        Value::Object(m) if m.len() == 1 => m.get(TUNE_MARKER),
        _ => None,
    }
}

fn find_nested_marker(v: &Value, ptr: &str) -> Option<String> {
    match v {
        Value::Object(m) => m.iter().find_map(|(k, x)| {
            let p = child(ptr, k);
            if k == TUNE_MARKER {
                Some(p)
            } else {
                find_nested_marker(x, &p)
            }
        }),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .find_map(|(i, x)| find_nested_marker(x, &child(ptr, i))),
        _ => None,
    }
}

fn parse_tunable(body: &Value, ptr: &str, path: &str) -> Result<TunableDecl, ParseError> {
    let obj = as_object(body, ptr)?;
    let kind_name = required_str(obj, ptr, "kind")?;
    let kind = match kind_name {
        "float" => {
            check_keys(obj, ptr, &["kind", "low", "high", "default"])?;
            let low = required_f64(obj, ptr, "low")?;
            let high = required_f64(obj, ptr, "high")?;
            if low >= high || low.is_nan() || high.is_nan() {
                return Err(schema(ptr, "requires low < high"));
            }
            TunableKind::Float { low, high }
        }
        "int" => {
            check_keys(obj, ptr, &["kind", "low", "high", "default"])?;
            let low = required_i64(obj, ptr, "low")?;
            let high = required_i64(obj, ptr, "high")?;
            if low >= high {
                return Err(schema(ptr, "requires low < high"));
            }
            TunableKind::Int { low, high }
        }
        "categorical" => {
            check_keys(obj, ptr, &["kind", "choices", "default"])?;
            let cptr = child(ptr, "choices");
            let choices = as_array(required(obj, ptr, "choices")?, &cptr)?.clone();
            if choices.len() < 2 {
                return Err(schema(cptr, "needs at least two choices"));
            }
            for (i, c) in choices.iter().enumerate() {
                if c.is_object() || c.is_array() || c.is_null() {
                    return Err(schema(child(&cptr, i), "choices must be scalars"));
                }
                if choices[..i].contains(c) {
                    return Err(schema(child(&cptr, i), "duplicate choice"));
                }
            }
            TunableKind::Categorical { choices }
        }
        other => {
            return Err(schema(
                child(ptr, "kind"),
                format!("unknown tunable kind `{other}` (expected float, int or categorical)"),
            ))
        }
    };
    let default = required(obj, ptr, "default")?.clone();
    if !kind.admits(&default) {
        return Err(schema(child(ptr, "default"), "default lies outside the declared range"));
    }
    Ok(TunableDecl { path: path.to_string(), kind, default })
}

fn parse_tuner(value: &Value, ptr: &str) -> Result<TunerSettings, ParseError> {
    let obj = as_object(value, ptr)?;
    check_keys(
        obj,
        ptr,
        &[
            "seed", "budget", "epsilon", "n_init", "patience", "xi", "n_candidates", "n_local",
            "local_std", "k", "weights", "corpus",
        ],
    )?;
    let mut t = TunerSettings::default();
    let uint = |key: &str| -> Result<Option<u64>, ParseError> {
        obj.get(key)
            .map(|v| v.as_u64().ok_or_else(|| schema(child(ptr, key), "expected a nonnegative integer")))
            .transpose()
    };
    let nonneg = |key: &str| -> Result<Option<f64>, ParseError> {
        obj.get(key)
            .map(|v| match v.as_f64() {
                Some(x) if x >= 0.0 && x.is_finite() => Ok(x),
                _ => Err(schema(child(ptr, key), "expected a finite nonnegative number")),
            })
            .transpose()
    };
    if let Some(v) = uint("seed")? {
        t.seed = v;
    }
    if let Some(v) = uint("budget")? {
        if v == 0 {
            return Err(schema(child(ptr, "budget"), "must be at least 1"));
        }
        t.budget = v as usize;
    }
    if let Some(v) = nonneg("epsilon")? {
        t.epsilon = v;
    }
    if let Some(v) = uint("n_init")? {
        if v == 0 {
            return Err(schema(child(ptr, "n_init"), "must be at least 1"));
        }
        t.n_init = Some(v as usize);
    }
    if let Some(v) = uint("patience")? {
        if v == 0 {
            return Err(schema(child(ptr, "patience"), "must be at least 1"));
        }
        t.patience = v as usize;
    }
    if let Some(v) = nonneg("xi")? {
        t.xi = v;
    }
    if let Some(v) = uint("n_candidates")? {
        t.n_candidates = v as usize;
    }
    if let Some(v) = uint("n_local")? {
        t.n_local = v as usize;
    }
    if let Some(v) = nonneg("local_std")? {
        t.local_std = v;
    }
    if let Some(v) = uint("k")? {
        if v == 0 {
            return Err(schema(child(ptr, "k"), "must be at least 1"));
        }
        t.k = v as usize;
    }
    if let Some(w) = obj.get("weights") {
        let wptr = child(ptr, "weights");
        let wobj = as_object(w, &wptr)?;
        check_keys(wobj, &wptr, &["recall", "f1"])?;
        let mut weights = ObjectiveWeights::default();
        for (key, slot) in [("recall", &mut weights.recall), ("f1", &mut weights.f1)] {
            if let Some(v) = wobj.get(key) {
                *slot = v
                    .as_f64()
                    .filter(|x| *x >= 0.0 && x.is_finite())
                    .ok_or_else(|| schema(child(&wptr, key), "expected a nonnegative number"))?;
            }
        }
        if weights.recall + weights.f1 <= 0.0 {
            return Err(schema(wptr, "weights must not both be zero"));
        }
        t.weights = weights;
    }
    if let Some(c) = obj.get("corpus") {
        t.corpus = Some(
            c.as_str()
                .ok_or_else(|| schema(child(ptr, "corpus"), "expected a path string"))?
                .to_string(),
        );
    }
    Ok(t)
}

fn as_object<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>, ParseError> {
    v.as_object().ok_or_else(|| schema(pointer_or_root(ptr), "expected an object"))
}

fn as_array<'a>(v: &'a Value, ptr: &str) -> Result<&'a Vec<Value>, ParseError> {
    v.as_array().ok_or_else(|| schema(pointer_or_root(ptr), "expected an array"))
}

fn pointer_or_root(ptr: &str) -> String {
    if ptr.is_empty() {
        "/".to_string()
    } else {
        ptr.to_string()
    }
}

fn required<'a>(obj: &'a Map<String, Value>, ptr: &str, key: &str) -> Result<&'a Value, ParseError> {
    obj.get(key)
        .ok_or_else(|| schema(child(ptr, key), format!("missing required field `{key}`")))
}

fn required_str<'a>(obj: &'a Map<String, Value>, ptr: &str, key: &str) -> Result<&'a str, ParseError> {
    required(obj, ptr, key)?
        .as_str()
        .ok_or_else(|| schema(child(ptr, key), "expected a string"))
}

fn required_f64(obj: &Map<String, Value>, ptr: &str, key: &str) -> Result<f64, ParseError> {
    required(obj, ptr, key)?
        .as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| schema(child(ptr, key), "expected a number"))
}

fn required_i64(obj: &Map<String, Value>, ptr: &str, key: &str) -> Result<i64, ParseError> {
    required(obj, ptr, key)?
        .as_i64()
        .ok_or_else(|| schema(child(ptr, key), "expected an integer"))
}

fn check_keys(obj: &Map<String, Value>, ptr: &str, allowed: &[&str]) -> Result<(), ParseError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(child(ptr, k), format!("unknown field `{k}`"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VANILLA: &str = r#"{
      "name": "vanilla",
      "domains": [{"name": "chunks", "indexed": true, "dim": 64}],
      "stages": [
        {"kind": "chunker", "params": {
            "chunk_size": {"$tune": {"kind": "int", "low": 64, "high": 512, "default": 128}},
            "overlap_ratio": {"$tune": {"kind": "float", "low": 0.0, "high": 0.5, "default": 0.0}}},
         "outputs": ["chunks"]},
        {"kind": "embedder", "inputs": ["chunks"], "outputs": ["chunks"]},
        {"kind": "vector_retriever", "params": {"top_k": 5}, "inputs": ["chunks"]},
        {"kind": "generator", "inputs": ["chunks"]}
      ]
    }"#;

    #[test]
    fn vanilla_has_two_tunables() {
        let spec = parse_spec(VANILLA).unwrap();
        assert_eq!(spec.tunables.len(), 2);
        assert_eq!(spec.tunables[0].path, "chunker.chunk_size");
        assert_eq!(spec.tunables[0].kind, TunableKind::Int { low: 64, high: 512 });
        assert_eq!(spec.tunables[1].path, "chunker.overlap_ratio");
        assert_eq!(
            spec.stages[0].params["chunk_size"],
            ParamValue::Tunable(TunableRef { path: "chunker.chunk_size".into() })
        );
        assert!(!spec.is_concrete());
    }

    #[test]
    fn graph_thresholds_are_three_float_tunables() {
        let text = r#"{
          "name": "graph",
          "domains": [
            {"name": "chunks", "indexed": true, "dim": 64},
            {"name": "entities", "indexed": true, "dim": 64},
            {"name": "triples"}, {"name": "synonyms"},
            {"parent_of": {"parent": "chunks", "child": "entities"}}
          ],
          "stages": [
            {"kind": "chunker", "outputs": ["chunks"]},
            {"kind": "triple_extractor", "inputs": ["chunks"], "outputs": ["entities", "triples"]},
            {"kind": "synonym_linker", "inputs": ["entities"], "outputs": ["synonyms"],
             "params": {"threshold": {"$tune": {"kind": "float", "low": 0, "high": 1, "default": 0.8}}}},
            {"kind": "ppr_retriever", "inputs": ["entities", "triples", "synonyms", "chunks"],
             "params": {
               "link_threshold": {"$tune": {"kind": "float", "low": 0, "high": 1, "default": 0.8}},
               "damping": {"$tune": {"kind": "float", "low": 0, "high": 1, "default": 0.5}}}}
          ]
        }"#;
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.tunables.len(), 3);
        assert!(spec
            .tunables
            .iter()
            .all(|t| t.kind == TunableKind::Float { low: 0.0, high: 1.0 }));
        assert_eq!(
            spec.relations,
            vec![ParentRelation { parent: "chunks".into(), child: "entities".into() }]
        );
    }

    #[test]
    fn undeclared_domain_is_a_schema_error() {
        let text = r#"{"name":"x","domains":[],"stages":[{"kind":"chunker","outputs":["chunks"]}]}"#;
        let err = parse_spec(text).unwrap_err();
        assert_eq!(err.pointer(), "/stages/0/outputs/0");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_spec("{\n  \"name\": ,\n}").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, .. }), "{err:?}");
        assert_eq!(err.pointer(), "");
    }

    #[test]
    fn duplicate_tunable_path() {
        let text = r#"{"name":"x","domains":[],"stages":[
            {"kind":"a","params":{"p":{"$tune":{"kind":"int","low":0,"high":3,"default":1}}}},
            {"kind":"a","params":{"p":{"$tune":{"kind":"int","low":0,"high":3,"default":1}}}}]}"#;
        let err = parse_spec(text).unwrap_err();
        assert_eq!(
            err,
            ParseError::DuplicateTunablePath {
                path: "a.p".into(),
                pointer: "/stages/1/params/p".into()
            }
        );
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let cases = [
            (r#"[]"#, "/"),
            (r#"{"domains":[],"stages":[{"kind":"a"}]}"#, "/name"),
            (r#"{"name":"x","domains":[{"name":"d","indexed":true}],"stages":[{"kind":"a"}]}"#, "/domains/0"),
            (r#"{"name":"x","domains":[],"stages":[{"kind":"a","params":{"p":{"$tune":{"kind":"float","low":1,"high":0,"default":0.5}}}}]}"#, "/stages/0/params/p/$tune"),
            (r#"{"name":"x","domains":[],"stages":[{"kind":"a","params":{"p":{"$tune":{"kind":"int","low":0,"high":4,"default":9}}}}]}"#, "/stages/0/params/p/$tune/default"),
            (r#"{"name":"x","domains":[],"stages":[{"kind":"a","params":{"p":{"$tune":{"kind":"categorical","choices":["x"],"default":"x"}}}}]}"#, "/stages/0/params/p/$tune/choices"),
            (r#"{"name":"x","domains":[],"stages":[{"kind":"a","params":{"p":{"nested":{"$tune":{}}}}}]}"#, "/stages/0/params/p/nested/$tune"),
            (r#"{"name":"x","domains":[],"stages":[{"kind":"a","colour":1}]}"#, "/stages/0/colour"),
            (r#"{"name":"x","domains":[{"parent_of":{"parent":"a","child":"b"}}],"stages":[{"kind":"a"}]}"#, "/domains/0/parent_of/parent"),
            (r#"{"name":"x","domains":[{"name":"d"}],"stages":[{"kind":"r","inputs":["d"]},{"kind":"w","outputs":["d"]}]}"#, "/stages/0/inputs/0"),
            (r#"{"name":"x","domains":[],"stages":[{"kind":"a"},{"kind":"a"}]}"#, "/stages/1/name"),
            (r#"{"name":"x","domains":[],"stages":[{"kind":"a"}],"tuner":{"budget":0}}"#, "/tuner/budget"),
        ];
        for (text, pointer) in cases {
            let err = parse_spec(text).unwrap_err();
            assert_eq!(err.pointer(), pointer, "{text} -> {err}");
        }
    }

    #[test]
    fn tuner_block_defaults_and_overrides() {
        let text = r#"{"name":"x","domains":[],"stages":[{"kind":"a"}],
            "tuner":{"seed":7,"budget":10,"weights":{"recall":1.0,"f1":0.0},"k":3}}"#;
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.tuner.seed, 7);
        assert_eq!(spec.tuner.budget, 10);
        assert_eq!(spec.tuner.k, 3);
        assert_eq!(spec.tuner.weights, ObjectiveWeights { recall: 1.0, f1: 0.0 });
        assert_eq!(spec.tuner.patience, 5);
        assert_eq!(spec.tuner.xi, 0.01);
    }
}
