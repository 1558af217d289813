//! Component registration, the stage contract, and the two-phase executor.
//!
//! A run first executes every index-phase stage once over the corpus, then
//! freezes the store and executes the query-phase stages once per query.
//! Stages exchange data through the element store and, within one query,
//! through a [`Scratch`] map.

mod registry;
mod run;
mod view;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dem::ElementId;
use crate::dsl::{PipelineSpec, StageSpec};
use crate::provider::ProviderError;

pub use registry::{ComponentRegistry, Factory, RegistryError};
pub use run::{build_pipeline, run_pipeline, BuildError, Pipeline, QueryRecord, RunError, RunResult, StageContract};
pub use view::{AccessError, Grants, StoreRead, StoreReader, StoreWrite, StoreWriter};

/// Scratch key holding the ranked retrieval for the current query.
pub const RETRIEVED: &str = "retrieved";
/// Scratch key holding the generated answer.
pub const ANSWER: &str = "answer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Index,
    Query,
}

/// A named domain slot in a contract. `indexed` slots only accept
/// vector-indexed domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Role {
    pub name: String,
    pub indexed: bool,
}

impl Role {
    pub fn any(name: &str) -> Self {
        Self { name: name.to_string(), indexed: false }
    }

    pub fn indexed(name: &str) -> Self {
        Self { name: name.to_string(), indexed: true }
    }
}

/// What a component kind promises: its phase and the domain slots it reads
/// and writes. Query-phase components never write the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contract {
    pub phase: Phase,
    pub inputs: Vec<Role>,
    pub outputs: Vec<Role>,
}

impl Contract {
    pub fn new(phase: Phase, inputs: Vec<Role>, outputs: Vec<Role>) -> Self {
        Self { phase, inputs, outputs }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ComponentError {
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid parameter `{param}`: {message}")]
    Config { param: String, message: String },
    #[error("{0}")]
    Failed(String),
}

impl From<crate::dem::DemError> for ComponentError {
    fn from(e: crate::dem::DemError) -> Self {
        ComponentError::Access(AccessError::Store(e))
    }
}

/// A source document handed to the index phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub qid: String,
    pub question: String,
}

/// Run-level artifacts that are not elements (edge counts and the like).
pub type Artifacts = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub enum ScratchValue {
    Hits(Vec<(ElementId, f64)>),
    Text(String),
    Vector(Vec<f64>),
}

/// Per-query key-value state shared by the query-phase stages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scratch {
    values: BTreeMap<String, ScratchValue>,
}

impl Scratch {
    pub fn set(&mut self, key: &str, value: ScratchValue) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&ScratchValue> {
        self.values.get(key)
    }

    pub fn hits(&self, key: &str) -> Option<&[(ElementId, f64)]> {
        match self.values.get(key)? {
            ScratchValue::Hits(h) => Some(h),
            _ => None,
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.values.get(key)? {
            ScratchValue::Text(t) => Some(t),
            _ => None,
        }
    }
}

pub struct IndexContext<'a> {
    pub store: StoreWriter<'a>,
    pub corpus: &'a [Document],
    pub artifacts: &'a mut Artifacts,
    pub inputs: &'a [String],
    pub outputs: &'a [String],
}

pub struct QueryContext<'a> {
    pub store: StoreReader<'a>,
    pub query: &'a Query,
    pub scratch: &'a mut Scratch,
    pub artifacts: &'a Artifacts,
    pub inputs: &'a [String],
}

/// The unified stage interface. Index-phase components implement
/// [`Component::index`]; query-phase components implement
/// [`Component::query`] and may precompute from the frozen store in
/// [`Component::prepare`].
pub trait Component: Send + Sync {
    fn index(&mut self, _ctx: &mut IndexContext<'_>) -> Result<(), ComponentError> {
        Ok(())
    }

    fn prepare(&mut self, _store: StoreReader<'_>, _inputs: &[String]) -> Result<(), ComponentError> {
        Ok(())
    }

    fn query(&self, _ctx: &mut QueryContext<'_>) -> Result<(), ComponentError> {
        Ok(())
    }
}

/// What a factory sees when instantiating one stage.
pub struct StageConfig<'a> {
    pub stage: &'a StageSpec,
    pub spec: &'a PipelineSpec,
}

impl StageConfig<'_> {
    pub fn param(&self, key: &str) -> Option<&Value> {
        self.stage.literal(key)
    }

    fn bad(&self, key: &str, message: &str) -> ComponentError {
        ComponentError::Config { param: format!("{}.{key}", self.stage.name), message: message.to_string() }
    }

    pub fn f64_param(&self, key: &str, default: f64) -> Result<f64, ComponentError> {
        match self.param(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.bad(key, "expected a number")),
        }
    }

    pub fn usize_param(&self, key: &str, default: usize) -> Result<usize, ComponentError> {
        match self.param(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| self.bad(key, "expected a nonnegative integer")),
        }
    }

    pub fn str_param<'s>(&'s self, key: &str, default: &'s str) -> Result<&'s str, ComponentError> {
        match self.param(key) {
            None => Ok(default),
            Some(v) => v.as_str().ok_or_else(|| self.bad(key, "expected a string")),
        }
    }

    pub fn input(&self, i: usize) -> &str {
        &self.stage.inputs[i]
    }

    pub fn output(&self, i: usize) -> &str {
        &self.stage.outputs[i]
    }

    pub fn dim_of(&self, domain: &str) -> Option<usize> {
        self.spec.domain(domain).and_then(|d| d.dim)
    }

    pub fn config_error(&self, key: &str, message: &str) -> ComponentError {
        self.bad(key, message)
    }
}
