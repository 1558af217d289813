use std::fmt;

use super::PipelineSpec;
use crate::runtime::{ComponentRegistry, Role};

/// A problem found when checking a spec against the registered components.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    UnknownComponent {
        pointer: String,
        kind: String,
        suggestion: Option<String>,
    },
    ContractMismatch {
        pointer: String,
        stage: String,
        message: String,
    },
}

impl Diagnostic {
    pub fn pointer(&self) -> &str {
        match self {
            Diagnostic::UnknownComponent { pointer, .. } | Diagnostic::ContractMismatch { pointer, .. } => {
                pointer
            }
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnknownComponent { pointer, kind, suggestion } => {
                write!(f, "{pointer}: unknown component kind `{kind}`")?;
                if let Some(s) = suggestion {
                    write!(f, " (did you mean `{s}`?)")?;
                }
                Ok(())
            }
            Diagnostic::ContractMismatch { pointer, stage, message } => {
                write!(f, "{pointer}: stage `{stage}`: {message}")
            }
        }
    }
}

fn suggest(kind: &str, registry: &ComponentRegistry) -> Option<String> {
    registry
        .kinds()
        .map(|k| (strsim::levenshtein(kind, k), k))
        .filter(|(d, k)| *d <= (k.len().max(kind.len()) / 3).max(2))
        .min_by_key(|(d, _)| *d)
        .map(|(_, k)| k.to_string())
}

/// Checks every stage against its registered contract: the kind must exist,
/// input and output counts must match, and slots that need a vector index
/// must be bound to indexed domains.
pub fn validate_against_registry(spec: &PipelineSpec, registry: &ComponentRegistry) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (i, stage) in spec.stages.iter().enumerate() {
        let base = format!("/stages/{i}");
        let Some(contract) = registry.contract(&stage.kind) else {
            out.push(Diagnostic::UnknownComponent {
                pointer: format!("{base}/kind"),
                kind: stage.kind.clone(),
                suggestion: suggest(&stage.kind, registry),
            });
            continue;
        };
        for (field, declared, roles) in [
            ("inputs", &stage.inputs, &contract.inputs),
            ("outputs", &stage.outputs, &contract.outputs),
        ] {
            if declared.len() != roles.len() {
                let names: Vec<&str> = roles.iter().map(|r| r.name.as_str()).collect();
                out.push(Diagnostic::ContractMismatch {
                    pointer: format!("{base}/{field}"),
                    stage: stage.name.clone(),
                    message: format!(
                        "`{}` takes {} {field} [{}], found {}",
                        stage.kind,
                        roles.len(),
                        names.join(", "),
                        declared.len()
                    ),
                });
                continue;
            }
            for (j, (domain, role)) in declared.iter().zip(roles.iter()).enumerate() {
                if let Some(msg) = role_problem(spec, domain, role) {
                    out.push(Diagnostic::ContractMismatch {
                        pointer: format!("{base}/{field}/{j}"),
                        stage: stage.name.clone(),
                        message: msg,
                    });
                }
            }
        }
    }
    out
}

fn role_problem(spec: &PipelineSpec, domain: &str, role: &Role) -> Option<String> {
    let decl = spec.domain(domain)?;
    if role.indexed && !decl.indexed {
        return Some(format!(
            "slot `{}` needs a vector-indexed domain, `{}` is not indexed",
            role.name,
            domain
        ));
    }
    None
}
