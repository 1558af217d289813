use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    AccessError, Artifacts, Component, ComponentError, ComponentRegistry, Contract, Document,
    Grants, IndexContext, Phase, Query, QueryContext, Scratch, StageConfig, StoreReader,
    StoreWriter, ANSWER, RETRIEVED,
};
use crate::dem::{DemStore, ElementId, Violation};
use crate::dsl::{validate_against_registry, Diagnostic, ParentRelation, PipelineSpec};

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("tunable `{0}` has no value; apply an assignment first")]
    UnresolvedTunable(String),
    #[error("{}", join_diagnostics(.0))]
    ContractMismatch(Vec<Diagnostic>),
    #[error("stage `{stage}`: {cause}")]
    Factory { stage: String, cause: ComponentError },
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("stage `{stage}` failed: {cause}")]
    StageFailure { stage: String, cause: ComponentError },
    #[error("stage `{stage}` attempted {operation} on undeclared domain `{domain}`")]
    DomainAccessViolation { stage: String, domain: String, operation: &'static str },
    #[error("store domain `{domain}` is incompatible with the spec: {message}")]
    IncompatibleStore { domain: String, message: String },
    #[error("declared relation {} -> {} was never materialized", .0.parent, .0.child)]
    MissingRelation(ParentRelation),
    #[error("store integrity check failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Integrity(Vec<Violation>),
}

fn stage_error(stage: &str, cause: ComponentError) -> RunError {
    match cause {
        ComponentError::Access(AccessError::Denied { domain, operation }) => {
            RunError::DomainAccessViolation { stage: stage.to_string(), domain, operation }
        }
        cause => RunError::StageFailure { stage: stage.to_string(), cause },
    }
}

struct Stage {
    name: String,
    kind: String,
    contract: Contract,
    inputs: Vec<String>,
    outputs: Vec<String>,
    grants: Grants,
    component: Box<dyn Component>,
}

/// `(stage name, kind, contract, inputs, outputs)`.
pub type StageContract<'a> = (&'a str, &'a str, &'a Contract, &'a [String], &'a [String]);

/// An instantiated pipeline: stages split by phase, declared order kept
/// within each phase.
pub struct Pipeline {
    spec: PipelineSpec,
    index: Vec<Stage>,
    query: Vec<Stage>,
}

impl Pipeline {
    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    pub fn index_stages(&self) -> Vec<&str> {
        self.index.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn query_stages(&self) -> Vec<&str> {
        self.query.iter().map(|s| s.name.as_str()).collect()
    }

    /// `(stage name, kind, contract, inputs, outputs)` for every stage in
    /// execution order.
    pub fn stage_contracts(&self) -> Vec<StageContract<'_>> {
        self.index
            .iter()
            .chain(&self.query)
            .map(|s| {
                (s.name.as_str(), s.kind.as_str(), &s.contract, &s.inputs[..], &s.outputs[..])
            })
            .collect()
    }
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{} | {}]", self.index_stages().join(", "), self.query_stages().join(", "))
    }
}

/// Instantiates every stage of a concrete spec.
pub fn build_pipeline(registry: &ComponentRegistry, spec: &PipelineSpec) -> Result<Pipeline, BuildError> {
    if let Some(t) = spec.tunables.first() {
        return Err(BuildError::UnresolvedTunable(t.path.clone()));
    }
    for stage in &spec.stages {
        for p in stage.params.values() {
            if let crate::dsl::ParamValue::Tunable(r) = p {
                return Err(BuildError::UnresolvedTunable(r.path.clone()));
            }
        }
    }
    let diagnostics = validate_against_registry(spec, registry);
    if !diagnostics.is_empty() {
        return Err(BuildError::ContractMismatch(diagnostics));
    }

    let mut index = Vec::new();
    let mut query = Vec::new();
    for stage in &spec.stages {
        let contract = registry.contract(&stage.kind).expect("validated").clone();
        let factory = registry.factory(&stage.kind).expect("validated");
        let component = factory(&StageConfig { stage, spec })
            .map_err(|cause| BuildError::Factory { stage: stage.name.clone(), cause })?;
        let built = Stage {
            name: stage.name.clone(),
            kind: stage.kind.clone(),
            grants: Grants::new(&stage.inputs, &stage.outputs),
            inputs: stage.inputs.clone(),
            outputs: stage.outputs.clone(),
            contract,
            component,
        };
        match built.contract.phase {
            Phase::Index => index.push(built),
            Phase::Query => query.push(built),
        }
    }
    Ok(Pipeline { spec: spec.clone(), index, query })
}

/// Result for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub qid: String,
    /// Ranked element ids from the final retrieval stage.
    pub retrieved: Vec<ElementId>,
    /// Retrieved elements mapped to passage keys (their `doc_id`), first
    /// occurrence kept.
    #[serde(default)]
    pub passages: Vec<String>,
    pub answer: String,
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    pub records: Vec<QueryRecord>,
    pub index_timings_ms: BTreeMap<String, f64>,
    pub artifacts: Artifacts,
}

impl RunResult {
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Zeroes wall-clock timings so two runs can be compared exactly.
    pub fn without_timings(mut self) -> Self {
        for r in &mut self.records {
            r.timings_ms.values_mut().for_each(|t| *t = 0.0);
        }
        self.index_timings_ms.values_mut().for_each(|t| *t = 0.0);
        self
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Executes the index phase once over `corpus`, then the query phase once per
/// query. Queries run in parallel against the frozen store; results keep
/// query order.
pub fn run_pipeline(
    pipeline: &mut Pipeline,
    corpus: &[Document],
    queries: &[Query],
    store: &mut DemStore,
) -> Result<RunResult, RunError> {
    for d in &pipeline.spec.domains {
        match store.domain(&d.name) {
            None => {
                store.create_domain(&d.name, d.indexed, d.dim).map_err(|e| {
                    RunError::IncompatibleStore { domain: d.name.clone(), message: e.to_string() }
                })?;
            }
            Some(existing) if existing.indexed() != d.indexed || existing.embedding_dim() != d.dim => {
                return Err(RunError::IncompatibleStore {
                    domain: d.name.clone(),
                    message: format!(
                        "store has indexed={} dim={:?}, spec declares indexed={} dim={:?}",
                        existing.indexed(),
                        existing.embedding_dim(),
                        d.indexed,
                        d.dim
                    ),
                });
            }
            Some(_) => {}
        }
    }

    let mut result = RunResult::default();
    for stage in &mut pipeline.index {
        let start = Instant::now();
        let mut ctx = IndexContext {
            store: StoreWriter::new(store, &stage.grants),
            corpus,
            artifacts: &mut result.artifacts,
            inputs: &stage.inputs,
            outputs: &stage.outputs,
        };
        stage
            .component
            .index(&mut ctx)
            .map_err(|e| stage_error(&stage.name, e))?;
        result.index_timings_ms.insert(stage.name.clone(), elapsed_ms(start));
    }

    for rel in &pipeline.spec.relations {
        let children: Vec<_> = store
            .elements_in(&rel.child)
            .map_err(|e| RunError::IncompatibleStore { domain: rel.child.clone(), message: e.to_string() })?
            .collect();
        let linked = children.iter().any(|c| {
            c.parents()
                .iter()
                .any(|p| store.element(*p).is_ok_and(|pe| pe.domain() == rel.parent))
        });
        if !children.is_empty() && !linked {
            return Err(RunError::MissingRelation(rel.clone()));
        }
    }

    let violations = store.validate();
    if !violations.is_empty() {
        return Err(RunError::Integrity(violations));
    }

    // The store is frozen from here on.
    let frozen: &DemStore = store;
    for stage in &mut pipeline.query {
        stage
            .component
            .prepare(StoreReader::new(frozen, &stage.grants), &stage.inputs)
            .map_err(|e| stage_error(&stage.name, e))?;
    }

    let stages = &pipeline.query;
    let artifacts = &result.artifacts;
    let outcomes: Vec<Result<QueryRecord, RunError>> = queries
        .par_iter()
        .map(|query| {
            let mut scratch = Scratch::default();
            let mut timings = BTreeMap::new();
            for stage in stages {
                let start = Instant::now();
                let mut ctx = QueryContext {
                    store: StoreReader::new(frozen, &stage.grants),
                    query,
                    scratch: &mut scratch,
                    artifacts,
                    inputs: &stage.inputs,
                };
                stage
                    .component
                    .query(&mut ctx)
                    .map_err(|e| stage_error(&stage.name, e))?;
                timings.insert(stage.name.clone(), elapsed_ms(start));
            }
            let retrieved: Vec<ElementId> = scratch
                .hits(RETRIEVED)
                .map(|h| h.iter().map(|(id, _)| *id).collect())
                .unwrap_or_default();
            let mut passages: Vec<String> = Vec::new();
            for id in &retrieved {
                let key = frozen
                    .element(*id)
                    .ok()
                    .and_then(|e| e.prop("doc_id").and_then(|v| v.as_str()).map(str::to_string))
                    .unwrap_or_else(|| id.to_string());
                if !passages.contains(&key) {
                    passages.push(key);
                }
            }
            Ok(QueryRecord {
                qid: query.qid.clone(),
                retrieved,
                passages,
                answer: scratch.text(ANSWER).unwrap_or_default().to_string(),
                timings_ms: timings,
            })
        })
        .collect();
    result.records = outcomes.into_iter().collect::<Result<_, _>>()?;
    Ok(result)
}
