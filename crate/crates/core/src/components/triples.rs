use std::collections::BTreeMap;

use super::embedding::{remote_endpoint, EmbeddingProvider};
use crate::dem::{ElementId, PropValue, Props};
use crate::provider::{chat_completion, ChatMessage, EndpointConfig};
use crate::runtime::{Component, ComponentError, IndexContext, StageConfig, StoreRead, StoreWrite};
use crate::text::normalize_surface;

pub const EXTRACTION_PROMPT: &str = "Extract factual triples from the passage. \
Write one triple per line in exactly the form (subject; relation; object). Write nothing else.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: &str, relation: &str, object: &str) -> Self {
        Self { subject: subject.into(), relation: relation.into(), object: object.into() }
    }
}

/// Every `(A; R; B)` occurrence in `text`, in textual order, with parts
/// trimmed. Parenthesized text that is not three nonempty `;`-separated
/// parts is ignored.
pub fn extract_triples_stub(text: &str) -> Vec<Triple> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('(') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(')') else { break };
        let inner = &after[..close];
        // an inner '(' means a later opening bracket owns this ')'
        if let Some(nested) = inner.rfind('(') {
            rest = &after[nested..];
            continue;
        }
        let parts: Vec<&str> = inner.split(';').map(str::trim).collect();
        if parts.len() == 3 && parts.iter().all(|p| !p.is_empty()) {
            out.push(Triple::new(parts[0], parts[1], parts[2]));
        }
        rest = &after[close + 1..];
    }
    out
}

enum Extractor {
    Stub,
    Remote(EndpointConfig),
}

impl Extractor {
    fn extract(&self, text: &str) -> Result<Vec<Triple>, ComponentError> {
        match self {
            Extractor::Stub => Ok(extract_triples_stub(text)),
            Extractor::Remote(endpoint) => {
                let messages = [ChatMessage::system(EXTRACTION_PROMPT), ChatMessage::user(text)];
                Ok(extract_triples_stub(&chat_completion(&messages, endpoint)?))
            }
        }
    }
}

/// Reads chunks, creates one entity per distinct normalized surface and one
/// triple element per extracted triple. Chunks become parents of the
/// entities they mention; each triple holds `[subject, object]`.
pub struct TripleExtractor {
    extractor: Extractor,
    embeddings: EmbeddingProvider,
}

impl TripleExtractor {
    pub fn from_config(cfg: &StageConfig<'_>) -> Result<Self, ComponentError> {
        let extractor = match cfg.str_param("extractor", "stub")? {
            "stub" => Extractor::Stub,
            "remote" => Extractor::Remote(remote_endpoint(cfg, "extractor_model")?),
            other => return Err(cfg.config_error("extractor", &format!("unknown extractor `{other}`"))),
        };
        let dim = cfg
            .dim_of(cfg.output(0))
            .ok_or_else(|| cfg.config_error("outputs", "entity domain declares no dim"))?;
        Ok(Self { extractor, embeddings: EmbeddingProvider::from_config(cfg, dim)? })
    }
}

impl Component for TripleExtractor {
    fn index(&mut self, ctx: &mut IndexContext<'_>) -> Result<(), ComponentError> {
        let chunks = ctx.inputs[0].clone();
        let entities = ctx.outputs[0].clone();
        let triples = ctx.outputs[1].clone();

        let mut by_surface: BTreeMap<String, ElementId> = ctx
            .store
            .elements_in(&entities)?
            .into_iter()
            .filter_map(|e| {
                let n = e.prop("normalized")?.as_str()?.to_string();
                Some((n, e.id()))
            })
            .collect();
        let mut fresh: Vec<(ElementId, String)> = Vec::new();
        let mut triple_count = 0usize;

        let chunk_texts: Vec<(ElementId, String)> = ctx
            .store
            .elements_in(&chunks)?
            .into_iter()
            .map(|e| (e.id(), e.prop("text").and_then(|v| v.as_str()).unwrap_or("").to_string()))
            .collect();

        for (chunk_id, text) in chunk_texts {
            for t in self.extractor.extract(&text)? {
                let (ns, no) = (normalize_surface(&t.subject), normalize_surface(&t.object));
                if ns.is_empty() || no.is_empty() || ns == no {
                    continue;
                }
                let mut ends = [ElementId::new(0); 2];
                for (slot, (surface, norm)) in [(&t.subject, ns), (&t.object, no)].into_iter().enumerate() {
                    let id = match by_surface.get(&norm) {
                        Some(id) => *id,
                        None => {
                            let props = Props::from([
                                ("surface".to_string(), PropValue::from(surface.as_str())),
                                ("normalized".to_string(), PropValue::from(norm.as_str())),
                            ]);
                            let id = ctx.store.create_element(&entities, props, 1.0)?;
                            by_surface.insert(norm, id);
                            fresh.push((id, surface.clone()));
                            id
                        }
                    };
                    ctx.store.link(chunk_id, id)?;
                    ends[slot] = id;
                }
                let props = Props::from([
                    ("relation".to_string(), PropValue::from(t.relation.as_str())),
                    ("source_chunk".to_string(), PropValue::Int(chunk_id.get() as i64)),
                ]);
                let edge = ctx.store.create_element(&triples, props, 1.0)?;
                ctx.store.link(edge, ends[0])?;
                ctx.store.link(edge, ends[1])?;
                triple_count += 1;
            }
        }

        let surfaces: Vec<String> = fresh.iter().map(|(_, s)| s.clone()).collect();
        let vectors = self.embeddings.embed(&surfaces)?;
        for ((id, _), v) in fresh.iter().zip(vectors) {
            ctx.store.set_embedding(*id, v)?;
        }
        ctx.artifacts.insert("entities".into(), by_surface.len().into());
        ctx.artifacts.insert("triples".into(), triple_count.into());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pattern() {
        assert_eq!(
            extract_triples_stub("Paris facts. (Paris; capital_of; France)"),
            vec![Triple::new("Paris", "capital_of", "France")]
        );
    }

    #[test]
    fn no_pattern() {
        assert!(extract_triples_stub("nothing (here) to (see; really)").is_empty());
        assert!(extract_triples_stub("").is_empty());
        assert!(extract_triples_stub("unclosed (a; b; c").is_empty());
    }

    #[test]
    fn patterns_in_textual_order() {
        let t = extract_triples_stub("( Ann ; knows ; Bob ) and then (Bob;likes;  Cy)");
        assert_eq!(t, vec![Triple::new("Ann", "knows", "Bob"), Triple::new("Bob", "likes", "Cy")]);
    }

    #[test]
    fn nested_brackets_take_innermost() {
        let t = extract_triples_stub("(note (A; r; B))");
        assert_eq!(t, vec![Triple::new("A", "r", "B")]);
    }
}
