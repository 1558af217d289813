//! The declarative pipeline language.
//!
//! A pipeline file declares domains, inter-domain parent relations, an
//! ordered list of component stages, and an optional tuner block. Any stage
//! parameter may be replaced in place by a `{"$tune": {...}}` marker, which
//! turns it into a tunable dimension addressed as `stage_name.param`.

mod assign;
mod canonical;
mod parse;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use assign::{apply_assignment, default_assignment, AssignmentError};
pub use canonical::canonical_form;
pub use parse::{parse_spec, ParseError};
pub use validate::{validate_against_registry, Diagnostic};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub name: String,
    pub description: Option<String>,
    pub domains: Vec<DomainDecl>,
    pub relations: Vec<ParentRelation>,
    pub stages: Vec<StageSpec>,
    pub tunables: Vec<TunableDecl>,
    pub tuner: TunerSettings,
}

impl PipelineSpec {
    pub fn domain(&self, name: &str) -> Option<&DomainDecl> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn stage(&self, name: &str) -> Option<&StageSpec> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn tunable(&self, path: &str) -> Option<&TunableDecl> {
        self.tunables.iter().find(|t| t.path == path)
    }

    /// True when no parameter is still a tunable marker.
    pub fn is_concrete(&self) -> bool {
        self.tunables.is_empty()
            && self
                .stages
                .iter()
                .all(|s| s.params.values().all(|p| matches!(p, ParamValue::Literal(_))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainDecl {
    pub name: String,
    pub indexed: bool,
    pub dim: Option<usize>,
}

/// Declares that elements of `child` hang under elements of `parent`. The
/// producing component creates the links; the runtime checks they exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentRelation {
    pub parent: String,
    pub child: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub kind: String,
    pub name: String,
    pub params: BTreeMap<String, ParamValue>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl StageSpec {
    pub fn literal(&self, key: &str) -> Option<&Value> {
        match self.params.get(key)? {
            ParamValue::Literal(v) => Some(v),
            ParamValue::Tunable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Literal(Value),
    Tunable(TunableRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TunableRef {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunableDecl {
    /// `stage_name.param`
    pub path: String,
    pub kind: TunableKind,
    pub default: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TunableKind {
    Float { low: f64, high: f64 },
    Int { low: i64, high: i64 },
    /// Choices keep their declared order.
    Categorical { choices: Vec<Value> },
}

impl TunableKind {
    pub fn name(&self) -> &'static str {
        match self {
            TunableKind::Float { .. } => "float",
            TunableKind::Int { .. } => "int",
            TunableKind::Categorical { .. } => "categorical",
        }
    }

    /// Whether `value` is a legal setting. Bounds are inclusive.
    pub fn admits(&self, value: &Value) -> bool {
        match self {
            TunableKind::Float { low, high } => value
                .as_f64()
                .is_some_and(|v| v.is_finite() && *low <= v && v <= *high),
            TunableKind::Int { low, high } => {
                value.as_i64().is_some_and(|v| *low <= v && v <= *high)
            }
            TunableKind::Categorical { choices } => choices.contains(value),
        }
    }
}

/// One concrete value per tunable path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub BTreeMap<String, Value>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, path: &str) -> Option<&Value> {
        self.0.get(path)
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Value) {
        self.0.insert(path.into(), value);
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub recall: f64,
    pub f1: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { recall: 0.5, f1: 0.5 }
    }
}

/// The `tuner` block. Every field has a default, and command-line flags may
/// override the budget, epsilon and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerSettings {
    pub seed: u64,
    pub budget: usize,
    pub epsilon: f64,
    /// Random trials before the surrogate takes over; `None` means
    /// `max(5, 2 * dimensions)`.
    pub n_init: Option<usize>,
    pub patience: usize,
    pub xi: f64,
    pub n_candidates: usize,
    pub n_local: usize,
    pub local_std: f64,
    /// Cutoff for Recall@k and the number of contexts scored.
    pub k: usize,
    pub weights: ObjectiveWeights,
    /// Corpus location, relative to the spec file.
    pub corpus: Option<String>,
}

impl Default for TunerSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: 25,
            epsilon: 0.0,
            n_init: None,
            patience: 5,
            xi: 0.01,
            n_candidates: 1024,
            n_local: 64,
            local_std: 0.05,
            k: 5,
            weights: ObjectiveWeights::default(),
            corpus: None,
        }
    }
}

/// RFC 6901 escaping of one pointer segment.
pub(crate) fn pointer_segment(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}
